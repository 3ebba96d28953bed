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

// Counter-based random numbers.
//
// Every random quantity in the simulator is drawn from Philox4x32-10 keyed by
// a 64-bit seed. Sub-streams are addressed by (tag, a, b) coordinates hashed
// through the same block cipher, so any component (pool generation, batch
// order, partitioning, initialization) can be replayed in isolation from the
// master seed alone. Distribution transforms (Box-Muller, Marsaglia-Tsang,
// bounded integers) are implemented here rather than taken from <random>
// because the standard distributions are implementation-defined.

#ifndef FEDKRSO_RANDOM_H_
#define FEDKRSO_RANDOM_H_

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace fedkrso {

struct Seed {
  std::uint64_t value = 0;

  friend bool operator==(const Seed&, const Seed&) = default;
};

// One Philox4x32-10 block: encrypts `counter` under `key`.
std::array<std::uint32_t, 4> Philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

// Named sub-stream domains. Values are part of the reproducibility contract.
enum class StreamTag : std::uint32_t {
  kSeedPool = 1,
  kProjection = 2,
  kSeedSelect = 3,
  kBatchOrder = 4,
  kPartition = 5,
  kWeightInit = 6,
  kDataGeneration = 7,
  kLoraInit = 8,
  kReplicate = 9,
  kPlantedModel = 10,
};

// Deterministically derives a child seed from `base` at coordinates (a, b).
Seed DeriveSeed(Seed base, StreamTag tag, std::uint64_t a = 0,
                std::uint64_t b = 0);

class RandomStream {
 public:
  explicit RandomStream(Seed seed, std::uint64_t stream_id = 0);

  std::uint32_t NextU32();
  std::uint64_t NextU64();

  // Uniform on [0, 1) with 53 random bits.
  double NextUniform();
  // Uniform on (0, 1].
  double NextOpenUniform();
  // Standard normal via Box-Muller; the second variate is cached.
  double NextGaussian();
  // Uniform integer in [0, bound). bound must be positive.
  std::uint64_t NextBelow(std::uint64_t bound);
  // log of a Gamma(shape, 1) variate; stays finite for tiny shapes.
  double NextLogGamma(double shape);

  template <typename T>
  void Shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(NextBelow(i));
      std::swap(values[i - 1], values[j]);
    }
  }

  // Dirichlet(alpha * 1_n) sample.
  std::vector<double> NextDirichlet(double alpha, int n);

 private:
  void Refill();

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_id_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int available_ = 0;
  bool has_spare_gaussian_ = false;
  double spare_gaussian_ = 0.0;
};

}  // namespace fedkrso

#endif  // FEDKRSO_RANDOM_H_
