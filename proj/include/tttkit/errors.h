// Copyright 2026 The tttkit Authors
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

namespace tttkit {

// Base for every error raised by the library. The CLI maps ConfigError to
// exit code 2 and everything else to 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A precondition of a numerical operation was violated (e.g. alpha outside
// [0,1], mismatched shapes).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class DegenerateBatchError : public Error {
 public:
  using Error::Error;
};

// Operation invoked in the wrong lifecycle phase (source training vs
// test-time adaptation).
class StatePhaseError : public Error {
 public:
  using Error::Error;
};

class EngineError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class VersionError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace tttkit
