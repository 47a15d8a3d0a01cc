/*
 * Copyright 2026 The nnreduce Authors
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

#ifndef NNREDUCE_ERRORS_HPP
#define NNREDUCE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace nnr {

enum class ErrorKind {
  shape,
  numeric,
  contract,
  parameter,
  data,
  parse,
  validation,
  config,
  training_diverged,
  io,
};

/// Base of every exception thrown by the library. The kind drives the C API
/// status code and the CLI exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define NNR_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

NNR_DEFINE_ERROR(ShapeError, shape)
NNR_DEFINE_ERROR(NumericError, numeric)
NNR_DEFINE_ERROR(ContractError, contract)
NNR_DEFINE_ERROR(ParameterError, parameter)
NNR_DEFINE_ERROR(DataError, data)
NNR_DEFINE_ERROR(ValidationError, validation)
NNR_DEFINE_ERROR(ConfigError, config)
NNR_DEFINE_ERROR(TrainingDivergedError, training_diverged)
NNR_DEFINE_ERROR(IoError, io)

#undef NNR_DEFINE_ERROR

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : Error(ErrorKind::parse, what + " (at byte " + std::to_string(byte_offset) + ")"),
        offset_(byte_offset) {}
  std::size_t byte_offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Exit codes of the command-line tool: 2 config, 3 data, 4 numeric/training.
inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::shape:
    case ErrorKind::contract:
    case ErrorKind::parameter:
    case ErrorKind::config:
      return 2;
    case ErrorKind::data:
    case ErrorKind::parse:
    case ErrorKind::validation:
    case ErrorKind::io:
      return 3;
    case ErrorKind::numeric:
    case ErrorKind::training_diverged:
      return 4;
  }
  return 1;
}

}  // namespace nnr

#endif  // NNREDUCE_ERRORS_HPP
