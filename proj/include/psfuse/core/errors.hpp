// Copyright 2026 The psfuse Authors.
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

namespace psfuse {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor, image or list dimensions disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A value lies outside the domain an operation is defined on.
class DomainError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A dataset or benchmark directory is missing files or is malformed.
class IngestionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class InsufficientObservationsError : public Error {
 public:
  using Error::Error;
};

class DegenerateLightingError : public Error {
 public:
  using Error::Error;
};

class TrainingDivergedError : public Error {
 public:
  using Error::Error;
};

}  // namespace psfuse
