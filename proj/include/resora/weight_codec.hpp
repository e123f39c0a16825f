// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resora authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "resora/adapter.hpp"

namespace resora {

// Binary tensor container.
//
//   offset 0   "RSAD"
//          4   version (u8) = 1
//          5   dtype (u8): 0 = f32, 1 = f64
//          6   two reserved bytes, written as zero
//          8   tensor count (u32 LE)
//   per tensor: name length (u32 LE), UTF-8 name, ndim (u8), dims (u64 LE each),
//               row-major little-endian payload
inline constexpr char kWeightMagic[4] = {'R', 'S', 'A', 'D'};
inline constexpr std::uint8_t kWeightVersion = 1;
inline constexpr std::size_t kWeightHeaderSize = 12;

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

struct Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<double> data;  // row-major; f32 files are widened on decode

  std::uint64_t element_count() const;
  bool operator==(const Tensor&) const = default;
};

using TensorMap = std::map<std::string, Tensor>;

class CodecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws CodecError for empty names, dims/data mismatch, or more than 255 dims.
std::vector<std::uint8_t> encode_tensors(const TensorMap& tensors, DType dtype = DType::f64);
// Throws CodecError naming the byte offset of the first problem.
TensorMap decode_tensors(const std::vector<std::uint8_t>& bytes);

void write_tensors(const TensorMap& tensors, const std::filesystem::path& path,
                   DType dtype = DType::f64);
TensorMap read_tensors(const std::filesystem::path& path);

Tensor to_tensor(const Matrix& m);
// Accepts 2-D tensors, and 1-D tensors as column vectors.
Matrix to_matrix(const Tensor& t, const std::string& name = "tensor");

// Adapters are stored as "w0", "b", "a".
TensorMap adapter_tensors(const LowRankAdapter& adapter);
LowRankAdapter adapter_from_tensors(const TensorMap& tensors);

void encode_weights(const LowRankAdapter& adapter, const std::filesystem::path& path);
LowRankAdapter decode_weights(const std::filesystem::path& path);

// Fetches a named tensor as a matrix; CodecError if missing.
Matrix require_matrix(const TensorMap& tensors, const std::string& name);

}  // namespace resora
