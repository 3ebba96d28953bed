// Copyright 2026 The FedKRSO Authors.
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

#ifndef FEDKRSO_ERRORS_H_
#define FEDKRSO_ERRORS_H_

#include <stdexcept>
#include <string>

namespace fedkrso {

// A configuration value violates a precondition (K = 0, r > d_n, ...).
class InvalidConfigurationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operands have inconsistent shapes or are otherwise malformed.
class InvalidArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Messages between server and clients do not fit together (wrong round,
// missing client, mismatched block shapes).
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dirichlet partitioning could not produce non-empty shards.
class PartitionFailureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A non-finite value appeared during local training.
class DivergedError : public std::runtime_error {
 public:
  DivergedError(int round, int client, int iteration)
      : std::runtime_error("non-finite value at round " +
                           std::to_string(round) + ", client " +
                           std::to_string(client) + ", local iteration " +
                           std::to_string(iteration)),
        round_(round),
        client_(client),
        iteration_(iteration) {}

  int round() const { return round_; }
  int client() const { return client_; }
  int iteration() const { return iteration_; }

 private:
  int round_;
  int client_;
  int iteration_;
};

}  // namespace fedkrso

#endif  // FEDKRSO_ERRORS_H_
