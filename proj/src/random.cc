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

#include "fedkrso/random.h"

#include <cmath>
#include <numbers>

#include "fedkrso/errors.h"

namespace fedkrso {
namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void MulHiLo(std::uint32_t a, std::uint32_t b, std::uint32_t* hi,
                    std::uint32_t* lo) {
  const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
  *hi = static_cast<std::uint32_t>(product >> 32);
  *lo = static_cast<std::uint32_t>(product);
}

inline std::uint32_t Lo(std::uint64_t v) { return static_cast<std::uint32_t>(v); }
inline std::uint32_t Hi(std::uint64_t v) {
  return static_cast<std::uint32_t>(v >> 32);
}

}  // namespace

std::array<std::uint32_t, 4> Philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kPhiloxW0;
      key[1] += kPhiloxW1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    MulHiLo(kPhiloxM0, counter[0], &hi0, &lo0);
    MulHiLo(kPhiloxM1, counter[2], &hi1, &lo1);
    counter = {hi1 ^ counter[1] ^ key[0], lo1, hi0 ^ counter[3] ^ key[1], lo0};
  }
  return counter;
}

Seed DeriveSeed(Seed base, StreamTag tag, std::uint64_t a, std::uint64_t b) {
  // The tag and `a` share one 64-bit lane; `a` is a round/client/layer index
  // and never approaches 2^32 in practice, but mix the high half anyway.
  const std::uint32_t lane0 = static_cast<std::uint32_t>(tag) ^ (Hi(a) * kPhiloxW1);
  const auto out = Philox4x32({lane0, Lo(a), Lo(b), Hi(b)},
                              {Lo(base.value), Hi(base.value)});
  return Seed{(static_cast<std::uint64_t>(out[1]) << 32) | out[0]};
}

RandomStream::RandomStream(Seed seed, std::uint64_t stream_id)
    : key_{Lo(seed.value), Hi(seed.value)}, stream_id_(stream_id) {}

void RandomStream::Refill() {
  buffer_ = Philox4x32({Lo(block_), Hi(block_), Lo(stream_id_), Hi(stream_id_)},
                       key_);
  ++block_;
  available_ = 4;
}

std::uint32_t RandomStream::NextU32() {
  if (available_ == 0) Refill();
  return buffer_[4 - available_--];
}

std::uint64_t RandomStream::NextU64() {
  const std::uint64_t lo = NextU32();
  const std::uint64_t hi = NextU32();
  return (hi << 32) | lo;
}

double RandomStream::NextUniform() {
  return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
}

double RandomStream::NextOpenUniform() {
  return (static_cast<double>(NextU64() >> 11) + 1.0) * 0x1.0p-53;
}

double RandomStream::NextGaussian() {
  if (has_spare_gaussian_) {
    has_spare_gaussian_ = false;
    return spare_gaussian_;
  }
  const double radius = std::sqrt(-2.0 * std::log(NextOpenUniform()));
  const double angle = 2.0 * std::numbers::pi * NextUniform();
  spare_gaussian_ = radius * std::sin(angle);
  has_spare_gaussian_ = true;
  return radius * std::cos(angle);
}

std::uint64_t RandomStream::NextBelow(std::uint64_t bound) {
  if (bound == 0) throw InvalidArgumentError("NextBelow: bound must be > 0");
  // Rejection on the top of the range keeps the result exactly uniform.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  std::uint64_t x;
  do {
    x = NextU64();
  } while (x >= limit);
  return x % bound;
}

double RandomStream::NextLogGamma(double shape) {
  if (!(shape > 0.0)) {
    throw InvalidArgumentError("NextLogGamma: shape must be > 0");
  }
  if (shape < 1.0) {
    // G(a) = G(a + 1) * U^(1/a), kept in log space.
    return NextLogGamma(shape + 1.0) + std::log(NextOpenUniform()) / shape;
  }
  // Marsaglia & Tsang (2000).
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x, v;
    do {
      x = NextGaussian();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = NextOpenUniform();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
      return std::log(d) + std::log(v);
    }
  }
}

std::vector<double> RandomStream::NextDirichlet(double alpha, int n) {
  if (n < 1) throw InvalidArgumentError("NextDirichlet: n must be >= 1");
  std::vector<double> logs(n);
  double max_log = -INFINITY;
  for (int i = 0; i < n; ++i) {
    logs[i] = NextLogGamma(alpha);
    max_log = std::max(max_log, logs[i]);
  }
  double total = 0.0;
  for (double& v : logs) {
    v = std::exp(v - max_log);
    total += v;
  }
  for (double& v : logs) v /= total;
  return logs;
}

}  // namespace fedkrso
