// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The resora authors

#include "resora/weight_codec.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace resora {

namespace {

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t k = 0; k < sizeof(U); ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (n > remaining()) {
      throw CodecError("truncated file at offset " + std::to_string(pos_) + ": " + what +
                       " needs " + std::to_string(n) + " bytes, " +
                       std::to_string(remaining()) + " left");
    }
  }

  template <typename U>
  U le(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t k = 0; k < sizeof(U); ++k) v |= static_cast<U>(bytes_[pos_ + k]) << (8 * k);
    pos_ += sizeof(U);
    return v;
  }

  const std::uint8_t* take(std::size_t n, const char* what) {
    need(n, what);
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::string at(std::size_t offset) { return " at offset " + std::to_string(offset); }

}  // namespace

std::uint64_t Tensor::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::vector<std::uint8_t> encode_tensors(const TensorMap& tensors, DType dtype) {
  if (tensors.size() > std::numeric_limits<std::uint32_t>::max())
    throw CodecError("too many tensors");
  std::vector<std::uint8_t> out(std::begin(kWeightMagic), std::end(kWeightMagic));
  put_u8(out, kWeightVersion);
  put_u8(out, static_cast<std::uint8_t>(dtype));
  put_u8(out, 0);
  put_u8(out, 0);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));

  for (const auto& [name, t] : tensors) {
    if (name.empty()) throw CodecError("tensor names must be non-empty");
    if (t.dims.size() > 255) throw CodecError("tensor '" + name + "' has more than 255 dims");
    if (t.element_count() != t.data.size()) {
      throw CodecError("tensor '" + name + "': dims describe " +
                       std::to_string(t.element_count()) + " elements, data has " +
                       std::to_string(t.data.size()));
    }
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u8(out, static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) put_le<std::uint64_t>(out, d);
    for (double v : t.data) {
      if (dtype == DType::f64) {
        put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
      } else {
        put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      }
    }
  }
  return out;
}

TensorMap decode_tensors(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes);
  const std::uint8_t* magic = in.take(4, "magic");
  if (std::memcmp(magic, kWeightMagic, 4) != 0) throw CodecError("bad magic" + at(0) + ", expected RSAD");
  const std::uint8_t version = in.le<std::uint8_t>("version");
  if (version != kWeightVersion) {
    throw CodecError("unsupported version " + std::to_string(version) + at(4));
  }
  const std::uint8_t dtype = in.le<std::uint8_t>("dtype");
  if (dtype > 1) throw CodecError("unknown dtype " + std::to_string(dtype) + at(5));
  in.take(2, "reserved bytes");
  const std::uint32_t count = in.le<std::uint32_t>("tensor count");
  const std::size_t width = dtype == 1 ? 8 : 4;

  TensorMap out;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::size_t name_at = in.offset();
    const std::uint32_t name_len = in.le<std::uint32_t>("name length");
    if (name_len == 0) throw CodecError("empty tensor name" + at(name_at));
    const std::uint8_t* name_bytes = in.take(name_len, "tensor name");
    std::string name(reinterpret_cast<const char*>(name_bytes), name_len);
    if (out.count(name)) throw CodecError("duplicate tensor '" + name + "'" + at(name_at));

    Tensor tensor;
    const std::uint8_t ndim = in.le<std::uint8_t>("ndim");
    in.need(std::size_t{ndim} * 8, "dims");
    std::uint64_t elements = 1;
    bool zero = false;
    for (std::uint8_t k = 0; k < ndim; ++k) {
      const std::size_t dim_at = in.offset();
      const std::uint64_t d = in.le<std::uint64_t>("dim");
      tensor.dims.push_back(d);
      if (d == 0) zero = true;
      if (!zero && d > 0 && elements > std::numeric_limits<std::uint64_t>::max() / d)
        throw CodecError("tensor '" + name + "' element count overflows" + at(dim_at));
      elements = zero ? 0 : elements * d;
    }
    const std::size_t payload_at = in.offset();
    if (elements > in.remaining() / width) {
      throw CodecError("tensor '" + name + "' payload of " + std::to_string(elements) +
                       " elements exceeds file size" + at(payload_at));
    }
    const std::uint8_t* payload = in.take(static_cast<std::size_t>(elements) * width, "payload");
    tensor.data.resize(static_cast<std::size_t>(elements));
    for (std::size_t e = 0; e < tensor.data.size(); ++e) {
      const std::uint8_t* p = payload + e * width;
      if (width == 8) {
        std::uint64_t bits = 0;
        for (std::size_t k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(p[k]) << (8 * k);
        tensor.data[e] = std::bit_cast<double>(bits);
      } else {
        std::uint32_t bits = 0;
        for (std::size_t k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(p[k]) << (8 * k);
        tensor.data[e] = static_cast<double>(std::bit_cast<float>(bits));
      }
    }
    out.emplace(std::move(name), std::move(tensor));
  }
  if (in.remaining() != 0) {
    throw CodecError(std::to_string(in.remaining()) + " trailing bytes" + at(in.offset()));
  }
  return out;
}

void write_tensors(const TensorMap& tensors, const std::filesystem::path& path, DType dtype) {
  const auto bytes = encode_tensors(tensors, dtype);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

TensorMap read_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_tensors(bytes);
  } catch (const CodecError& e) {
    throw CodecError(path.string() + ": " + e.what());
  }
}

Tensor to_tensor(const Matrix& m) {
  const auto d = m.data();
  return {{m.rows(), m.cols()}, std::vector<double>(d.begin(), d.end())};
}

Matrix to_matrix(const Tensor& t, const std::string& name) {
  if (t.dims.size() == 1) return Matrix(t.dims[0], 1, t.data);
  if (t.dims.size() != 2) {
    throw CodecError("tensor '" + name + "' has " + std::to_string(t.dims.size()) +
                     " dims, expected a matrix");
  }
  return Matrix(t.dims[0], t.dims[1], t.data);
}

Matrix require_matrix(const TensorMap& tensors, const std::string& name) {
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw CodecError("missing tensor '" + name + "'");
  return to_matrix(it->second, name);
}

TensorMap adapter_tensors(const LowRankAdapter& adapter) {
  return {{"w0", to_tensor(adapter.w0)}, {"b", to_tensor(adapter.b)}, {"a", to_tensor(adapter.a)}};
}

LowRankAdapter adapter_from_tensors(const TensorMap& tensors) {
  LowRankAdapter adapter{require_matrix(tensors, "w0"), require_matrix(tensors, "b"),
                         require_matrix(tensors, "a")};
  try {
    adapter.validate();
  } catch (const std::exception& e) {
    throw CodecError(std::string("inconsistent adapter tensors: ") + e.what());
  }
  return adapter;
}

void encode_weights(const LowRankAdapter& adapter, const std::filesystem::path& path) {
  write_tensors(adapter_tensors(adapter), path);
}

LowRankAdapter decode_weights(const std::filesystem::path& path) {
  return adapter_from_tensors(read_tensors(path));
}

}  // namespace resora
