// Copyright (c) 2026 The xvec Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "xvec/error.hpp"

namespace xvec {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kUsage:
    case ErrorKind::kUnsupported:
      return 1;
    case ErrorKind::kData:
    case ErrorKind::kFormat:
    case ErrorKind::kIo:
      return 2;
    case ErrorKind::kNumeric:
      return 3;
  }
  return 1;
}

}  // namespace xvec
