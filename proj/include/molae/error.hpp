/* Copyright 2026 the molae authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef MOLAE_ERROR_HPP
#define MOLAE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace molae {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid argument, shape mismatch, out-of-range index, bad configuration.
class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& msg) : Error(msg) {}
};

/// Operation invoked in the wrong order (e.g. backward without a cached forward).
class StateError : public Error {
 public:
  explicit StateError(const std::string& msg) : Error(msg) {}
};

/// Filesystem failure while reading or writing a model container.
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

/// Malformed container: bad magic, version mismatch, truncation, bad shapes,
/// non-finite payload. Carries the byte offset at which the problem was found.
class FormatError : public IoError {
 public:
  FormatError(const std::string& msg, std::uint64_t byte_offset)
      : IoError(msg + " (at byte offset " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  std::uint64_t offset;
};

/// Numerical algorithm failed (iteration cap hit, factorization impossible).
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

/// Cholesky input was not positive definite; the caller may regularize and retry.
class NotPositiveDefiniteError : public NumericalError {
 public:
  explicit NotPositiveDefiniteError(const std::string& msg) : NumericalError(msg) {}
};

}  // namespace molae

#endif  // MOLAE_ERROR_HPP
