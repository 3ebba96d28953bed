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

#include "fedkrso/dataset.h"

#include <bit>
#include <cstring>
#include <fstream>

#include "fedkrso/errors.h"

namespace fedkrso {
namespace {

constexpr char kMagic[8] = {'F', 'K', 'R', 'S', 'O', 'D', 'S', '1'};

static_assert(std::endian::native == std::endian::little,
              "dataset IO assumes a little-endian host");

template <typename T>
void WritePod(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T ReadPod(std::ifstream& in, const std::string& path) {
  T value;
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw InvalidArgumentError("truncated dataset file: " + path);
  }
  return value;
}

void WriteRowMajor(std::ofstream& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) WritePod<double>(out, m(i, j));
  }
}

Matrix ReadRowMajor(std::ifstream& in, std::uint64_t rows, std::uint64_t cols,
                    const std::string& path) {
  Matrix m(rows, cols);
  for (std::uint64_t i = 0; i < rows; ++i) {
    for (std::uint64_t j = 0; j < cols; ++j) m(i, j) = ReadPod<double>(in, path);
  }
  return m;
}

}  // namespace

Dataset Dataset::Subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.num_classes = num_classes;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
  out.targets.resize(static_cast<Eigen::Index>(indices.size()), targets.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = static_cast<Eigen::Index>(indices[i]);
    if (src >= size()) throw InvalidArgumentError("Subset: index out of range");
    out.features.row(i) = features.row(src);
    out.targets.row(i) = targets.row(src);
    if (labeled()) out.labels.push_back(labels[src]);
  }
  return out;
}

Batch MakeBatch(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw InvalidArgumentError("batch size must be >= 1");
  Batch b;
  b.inputs.resize(static_cast<Eigen::Index>(indices.size()), data.features.cols());
  b.targets.resize(static_cast<Eigen::Index>(indices.size()), data.targets.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = static_cast<Eigen::Index>(indices[i]);
    b.inputs.row(i) = data.features.row(src);
    b.targets.row(i) = data.targets.row(src);
  }
  return b;
}

Batch FullBatch(const Dataset& data) {
  if (data.size() == 0) throw InvalidArgumentError("empty dataset");
  return Batch{data.features, data.targets};
}

void WriteDataset(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgumentError("cannot open for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  WritePod<std::uint64_t>(out, static_cast<std::uint64_t>(data.size()));
  WritePod<std::uint64_t>(out, static_cast<std::uint64_t>(data.features.cols()));
  WritePod<std::uint64_t>(out, static_cast<std::uint64_t>(data.targets.cols()));
  WritePod<std::uint64_t>(out, static_cast<std::uint64_t>(data.num_classes));
  WriteRowMajor(out, data.features);
  WriteRowMajor(out, data.targets);
  if (data.labeled()) {
    for (int label : data.labels) WritePod<std::int64_t>(out, label);
  }
  if (!out) throw InvalidArgumentError("write failed: " + path);
}

Dataset ReadDataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgumentError("cannot open dataset: " + path);
  char magic[8];
  if (!in.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw InvalidArgumentError("not a dataset file (bad magic): " + path);
  }
  const auto rows = ReadPod<std::uint64_t>(in, path);
  const auto feature_dim = ReadPod<std::uint64_t>(in, path);
  const auto target_dim = ReadPod<std::uint64_t>(in, path);
  const auto num_classes = ReadPod<std::uint64_t>(in, path);
  Dataset data;
  data.num_classes = static_cast<int>(num_classes);
  data.features = ReadRowMajor(in, rows, feature_dim, path);
  data.targets = ReadRowMajor(in, rows, target_dim, path);
  if (num_classes > 0) {
    data.labels.reserve(rows);
    for (std::uint64_t i = 0; i < rows; ++i) {
      data.labels.push_back(static_cast<int>(ReadPod<std::int64_t>(in, path)));
    }
  }
  return data;
}

}  // namespace fedkrso
