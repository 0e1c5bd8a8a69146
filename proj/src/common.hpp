// src/common.hpp

// Copyright 2026  VQP Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef VQP_COMMON_HPP_
#define VQP_COMMON_HPP_

#include <stdexcept>
#include <string>

namespace vqp {

// Exit-code taxonomy: 0 ok, 1 usage/config, 2 data, 3 numeric fault.
enum class ErrorKind { kUsage = 1, kData = 2, kNumeric = 3 };

class VqpError : public std::runtime_error {
 public:
  VqpError(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

class UsageError : public VqpError {
 public:
  explicit UsageError(const std::string& msg)
      : VqpError(ErrorKind::kUsage, msg) {}
};

class DataError : public VqpError {
 public:
  explicit DataError(const std::string& msg)
      : VqpError(ErrorKind::kData, msg) {}
};

class NumericError : public VqpError {
 public:
  explicit NumericError(const std::string& msg)
      : VqpError(ErrorKind::kNumeric, msg) {}
};

}  // namespace vqp

#endif  // VQP_COMMON_HPP_
