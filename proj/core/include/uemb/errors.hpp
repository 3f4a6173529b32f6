// Copyright 2026 The uemb Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace uemb {

// Base of every error raised by the library. The CLI maps subclasses onto
// process exit codes (see tools/commands.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not compose.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A caller broke an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values or unknown configuration keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// A JSON Lines record is missing a required field or has the wrong type.
class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

// Binary file whose magic or version does not match.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

// Binary file whose trailing checksum does not match its content.
class ChecksumError : public DataError {
 public:
  using DataError::DataError;
};

// Benchmark aggregation could not find a required task.
class AggregationError : public DataError {
 public:
  using DataError::DataError;
};

// Training produced a non-finite loss.
class NumericalAbort : public Error {
 public:
  using Error::Error;
};

}  // namespace uemb
