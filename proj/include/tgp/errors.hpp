/* Copyright 2026 The TGP Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
        limitations under the License.
==============================================================================*/

#pragma once

#include <stdexcept>
#include <string>

namespace tgp {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Contract violations by the caller: bad shapes, bad options, misuse.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity appeared in an intermediate value.
class NonFiniteValue : public Error {
 public:
  NonFiniteValue(const std::string& what, int node = -1)
      : Error(what), node_(node) {}
  int node() const { return node_; }

 private:
  int node_;
};

class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

/// A flow step was evaluated outside its domain.
class DomainError : public Error {
 public:
  DomainError(const std::string& what, int step = -1)
      : Error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

/// A value lies outside the range of a flow, so it has no preimage.
class RangeError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

class SingularJacobian : public Error {
 public:
  using Error::Error;
};

/// G-SP needs a prior flow whose inverse is defined everywhere.
class FlowNotUnconstrained : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace tgp
