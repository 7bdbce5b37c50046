#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "casediag/io.hpp"
#include "casediag/tensor.hpp"

namespace casediag {

// Shared raw-tensor format: little-endian IEEE-754 values, X-fastest
// ordering, described by a JSON entry {shape, offset, nbytes} inside the
// owning manifest. Used by checkpoints and support indexes alike.

template <typename Scalar>
const char* dtype_name() {
  if constexpr (sizeof(Scalar) == 4)
    return "f32";
  else
    return "f64";
}

class BlobWriter {
 public:
  template <typename Scalar>
  Json add(const ArrayX<Scalar>& values, const Shape& shape) {
    Json desc;
    desc["shape"] = shape;
    desc["offset"] = bytes_.size();
    const std::size_t nbytes = std::size_t(values.size()) * sizeof(Scalar);
    desc["nbytes"] = nbytes;
    const std::size_t off = bytes_.size();
    bytes_.resize(off + nbytes);
    std::memcpy(bytes_.data() + off, values.data(), nbytes);
    return desc;
  }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class BlobReader {
 public:
  explicit BlobReader(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {}

  template <typename Scalar>
  ArrayX<Scalar> read(const Json& desc, const std::string& name) const {
    const auto shape = json_get<Shape>(desc, "shape", name);
    const auto offset = json_get<std::size_t>(desc, "offset", name);
    const auto nbytes = json_get<std::size_t>(desc, "nbytes", name);
    const std::int64_t count = shape_numel(shape);
    if (nbytes != std::size_t(count) * sizeof(Scalar))
      throw FormatError(name + ": blob length " + std::to_string(nbytes) +
                        " does not match shape " + shape_str(shape));
    if (offset + nbytes > bytes_.size())
      throw FormatError(name + ": blob range [" + std::to_string(offset) + ", " +
                        std::to_string(offset + nbytes) + ") exceeds file size " +
                        std::to_string(bytes_.size()));
    ArrayX<Scalar> values(count);
    std::memcpy(values.data(), bytes_.data() + offset, nbytes);
    return values;
  }

 private:
  std::vector<std::uint8_t> bytes_;
};

}  // namespace casediag
