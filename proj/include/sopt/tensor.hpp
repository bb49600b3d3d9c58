#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sopt/error.hpp"

namespace sopt {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major float32 array. Every dimension is positive and
// numel() == product(shape). Gradients live on the Tape, not here.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }
  const std::vector<float>& vec() const& { return data_; }
  std::vector<float> vec() && { return std::move(data_); }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // Same data viewed with a different shape of equal element count.
  Tensor reshaped(Shape shape) const;

  bool all_finite() const;
  // Throws NumericError naming `what` if any element is NaN or Inf.
  void check_finite(std::string_view what) const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

Tensor zeros_like(const Tensor& t);

// TENS1 dump: "TENS", u8 version (1), u8 rank, u32 LE dims, f32 LE payload.
void write_tens(std::ostream& out, const Tensor& t);
Tensor read_tens(std::istream& in);
void save_tens(const std::string& path, const Tensor& t);
Tensor load_tens(const std::string& path);

}  // namespace sopt
