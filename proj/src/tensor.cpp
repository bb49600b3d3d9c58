#include "sopt/tensor.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "byte_io.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace sopt {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {
void validate_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor rank must be at least 1");
  for (std::size_t i = 0; i < shape.size(); ++i)
    if (shape[i] == 0)
      throw ShapeError("tensor dimension " + std::to_string(i) + " is zero in " + shape_str(shape));
}
}  // namespace

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(shape_numel(shape_), fill);
  check_finite("Tensor fill");
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (shape_numel(shape_) != data_.size())
    throw ShapeError("shape " + shape_str(shape_) + " needs " + std::to_string(shape_numel(shape_)) +
                     " values, got " + std::to_string(data_.size()));
  check_finite("Tensor construction");
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape_));
  return shape_[axis];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel())
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  Tensor out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

bool Tensor::all_finite() const {
  for (float v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::check_finite(std::string_view what) const {
  if (!all_finite()) throw NumericError(std::string(what) + " produced a non-finite value");
}

Tensor zeros_like(const Tensor& t) { return Tensor(t.shape(), 0.0f); }

void write_tens(std::ostream& out, const Tensor& t) {
  if (t.rank() > 255) throw ShapeError("TENS1 supports rank up to 255");
  out.write("TENS", 4);
  detail::put_u8(out, 1);
  detail::put_u8(out, static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) detail::put_u32(out, static_cast<std::uint32_t>(d));
  out.write(reinterpret_cast<const char*>(t.data().data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
  if (!out) throw FormatError("TENS1 write failed");
}

Tensor read_tens(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4)) throw FormatError("TENS1: truncated header");
  if (std::memcmp(magic.data(), "TENS", 4) != 0) throw FormatError("TENS1: bad magic");
  const auto version = detail::get_u8(in);
  if (version != 1) throw FormatError("TENS1: unsupported version " + std::to_string(version));
  const auto rank = detail::get_u8(in);
  Shape shape(rank);
  for (auto& d : shape) d = detail::get_u32(in);
  if (rank == 0) throw FormatError("TENS1: rank 0");
  for (auto d : shape)
    if (d == 0) throw FormatError("TENS1: zero dimension");
  std::vector<float> data(shape_numel(shape));
  if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float))))
    throw FormatError("TENS1: truncated payload");
  return Tensor(std::move(shape), std::move(data));
}

void save_tens(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  write_tens(out, t);
}

Tensor load_tens(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open " + path);
  return read_tens(in);
}

}  // namespace sopt
