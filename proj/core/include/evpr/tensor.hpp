#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <vector>

#include "evpr/binary_io.hpp"

namespace evpr {

/// Dense row-major tensor of rank <= 4. Unused trailing dimensions are 1, so a
/// H x W x C image has dims {H, W, C, 1}. The last dimension varies fastest
/// (channel-last layout).
template <class T>
class Tensor {
 public:
  using Dims = std::array<uint32_t, 4>;

  Tensor() : dims_{0, 0, 0, 0} {}
  explicit Tensor(Dims dims, T fill = T{}) : dims_(dims), data_(element_count(dims), fill) {}
  Tensor(Dims dims, std::vector<T> data) : dims_(dims), data_(std::move(data)) {
    if (data_.size() != element_count(dims_)) {
      throw Error(ErrorCode::ShapeMismatch, "tensor payload does not match its dimensions");
    }
  }

  const Dims& dims() const noexcept { return dims_; }
  uint32_t dim(size_t i) const noexcept { return dims_[i]; }
  size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(size_t i0, size_t i1 = 0, size_t i2 = 0, size_t i3 = 0) noexcept {
    return data_[offset(i0, i1, i2, i3)];
  }
  const T& operator()(size_t i0, size_t i1 = 0, size_t i2 = 0, size_t i3 = 0) const noexcept {
    return data_[offset(i0, i1, i2, i3)];
  }

  size_t offset(size_t i0, size_t i1, size_t i2, size_t i3) const noexcept {
    return ((i0 * dims_[1] + i1) * dims_[2] + i2) * dims_[3] + i3;
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }

  bool operator==(const Tensor&) const = default;

  static size_t element_count(const Dims& d) noexcept {
    return static_cast<size_t>(d[0]) * d[1] * d[2] * d[3];
  }

 private:
  Dims dims_;
  std::vector<T> data_;
};

using FloatTensor = Tensor<float>;

// Debug dump format: dims as u32 LE x4, then the packed little-endian payload.

template <class T>
void append_tensor(io::ByteWriter& out, const Tensor<T>& tensor) {
  for (uint32_t d : tensor.dims()) out.put(d);
  out.put_array(tensor.values());
}

template <class T>
Tensor<T> read_tensor(io::ByteReader& in) {
  typename Tensor<T>::Dims dims;
  for (auto& d : dims) d = in.get<uint32_t>();
  std::vector<T> data(Tensor<T>::element_count(dims));
  in.get_array(std::span<T>(data));
  return Tensor<T>(dims, std::move(data));
}

template <class T>
std::vector<uint8_t> encode_tensor(const Tensor<T>& tensor) {
  io::ByteWriter out;
  append_tensor(out, tensor);
  return out.release();
}

template <class T>
Tensor<T> decode_tensor(std::span<const uint8_t> bytes) {
  io::ByteReader in(bytes);
  auto t = read_tensor<T>(in);
  if (in.remaining() != 0) throw Error(ErrorCode::TruncatedRecord, "trailing bytes after tensor payload");
  return t;
}

template <class T>
void write_tensor_dump(const std::filesystem::path& path, const Tensor<T>& tensor) {
  io::write_file(path, encode_tensor(tensor));
}

template <class T>
Tensor<T> read_tensor_dump(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return decode_tensor<T>(bytes);
}

}  // namespace evpr
