// Copyright 2026 The Loopgen Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LOOPGEN_ERROR_H_
#define LOOPGEN_ERROR_H_

#include <stdexcept>
#include <string>

namespace loopgen {

// Broad failure classes. The CLI maps them onto exit codes 1, 2 and 3.
enum class ErrorKind {
  kInvalidArgument,
  kData,
  kNumeric,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error InvalidArgument(const std::string& what) {
  return Error(ErrorKind::kInvalidArgument, what);
}
inline Error DataError(const std::string& what) {
  return Error(ErrorKind::kData, what);
}
inline Error NumericError(const std::string& what) {
  return Error(ErrorKind::kNumeric, what);
}

}  // namespace loopgen

#endif  // LOOPGEN_ERROR_H_
