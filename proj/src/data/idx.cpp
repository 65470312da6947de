#include <cstdio>
#include <fstream>
#include <iterator>

#include "perinv/data.hpp"
#include "perinv/errors.hpp"

namespace perinv {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t at) {
  return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
         (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::string hex_magic(std::uint32_t magic) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", magic);
  return buf;
}

std::uint32_t read_magic(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) {
    throw LengthError("IDX stream truncated: " + std::to_string(bytes.size()) +
                      " bytes, magic needs 4");
  }
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxLabelMagic && magic != kIdxImageMagic) {
    throw FormatError("unsupported IDX magic " + hex_magic(magic) + " (expected " +
                      hex_magic(kIdxLabelMagic) + " or " + hex_magic(kIdxImageMagic) + ")");
  }
  return magic;
}

// Dimension sizes plus a payload length check.
std::vector<std::size_t> read_dims(std::span<const std::uint8_t> bytes, std::size_t ndims) {
  const std::size_t header = 4 + 4 * ndims;
  if (bytes.size() < header) {
    throw LengthError("IDX header truncated: " + std::to_string(bytes.size()) + " bytes, need " +
                      std::to_string(header));
  }
  std::vector<std::size_t> dims;
  std::size_t payload = 1;
  for (std::size_t i = 0; i < ndims; ++i) {
    dims.push_back(read_be32(bytes, 4 + 4 * i));
    payload *= dims.back();
  }
  if (bytes.size() - header < payload) {
    throw LengthError("IDX payload truncated: have " + std::to_string(bytes.size() - header) +
                      " bytes, header promises " + std::to_string(payload));
  }
  return dims;
}

}  // namespace

std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  if (read_magic(bytes) != kIdxLabelMagic) {
    throw FormatError("expected IDX label magic " + hex_magic(kIdxLabelMagic) + ", found " +
                      hex_magic(read_be32(bytes, 0)));
  }
  const auto dims = read_dims(bytes, 1);
  std::vector<int> labels(dims[0]);
  for (std::size_t i = 0; i < dims[0]; ++i) labels[i] = bytes[8 + i];
  return labels;
}

IdxImages parse_idx_images(std::span<const std::uint8_t> bytes) {
  if (read_magic(bytes) != kIdxImageMagic) {
    throw FormatError("expected IDX image magic " + hex_magic(kIdxImageMagic) + ", found " +
                      hex_magic(read_be32(bytes, 0)));
  }
  const auto dims = read_dims(bytes, 3);
  IdxImages out{dims[0], dims[1], dims[2], {}};
  const auto payload = bytes.subspan(16, dims[0] * dims[1] * dims[2]);
  out.pixels.assign(payload.begin(), payload.end());
  return out;
}

IdxPayload parse_idx(std::span<const std::uint8_t> bytes) {
  if (read_magic(bytes) == kIdxLabelMagic) return parse_idx_labels(bytes);
  const IdxImages images = parse_idx_images(bytes);
  std::vector<std::size_t> all(images.count);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return images_to_tensor(images, all);
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const int> labels) {
  std::vector<std::uint8_t> out;
  write_be32(out, kIdxLabelMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int y : labels) {
    if (y < 0 || y > 255) throw PreconditionError("IDX labels must fit in one byte");
    out.push_back(static_cast<std::uint8_t>(y));
  }
  return out;
}

std::vector<std::uint8_t> encode_idx_images(const IdxImages& images) {
  if (images.pixels.size() != images.count * images.image_size()) {
    throw LayoutError("IDX images: pixel count does not match dimensions");
  }
  std::vector<std::uint8_t> out;
  write_be32(out, kIdxImageMagic);
  write_be32(out, static_cast<std::uint32_t>(images.count));
  write_be32(out, static_cast<std::uint32_t>(images.rows));
  write_be32(out, static_cast<std::uint32_t>(images.cols));
  out.insert(out.end(), images.pixels.begin(), images.pixels.end());
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

Tensor images_to_tensor(const IdxImages& images, std::span<const std::size_t> indices) {
  if (indices.empty()) throw PreconditionError("images_to_tensor: no images selected");
  const std::size_t sz = images.image_size();
  std::vector<double> data(indices.size() * sz);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= images.count) throw CapacityError("image index out of range");
    const std::uint8_t* src = images.pixels.data() + indices[k] * sz;
    for (std::size_t p = 0; p < sz; ++p) data[k * sz + p] = src[p] / 255.0;
  }
  return Tensor(Shape{indices.size(), images.rows, images.cols}, std::move(data));
}

}  // namespace perinv
