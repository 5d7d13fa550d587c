#include "slgan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace slgan {

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) {
    if (d < 0) throw Error("ShapeMismatch", "negative dimension");
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_))
    throw Error("ShapeMismatch", "data size does not match shape " + shape_str(shape_));
}

Tensor Tensor::reshaped(Shape s) const {
  if (shape_numel(s) != numel())
    throw Error("ShapeMismatch", "cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
  return Tensor(std::move(s), data_);
}

Tensor Tensor::slice0(std::int64_t begin, std::int64_t end) const {
  if (shape_.empty() || begin < 0 || end > shape_[0] || begin > end)
    throw Error("ShapeMismatch", "bad slice of " + shape_str(shape_));
  Shape s = shape_;
  s[0] = end - begin;
  const std::int64_t inner = shape_[0] ? numel() / shape_[0] : 0;
  std::vector<double> d(data_.begin() + begin * inner, data_.begin() + end * inner);
  return Tensor(std::move(s), std::move(d));
}

Tensor Tensor::stack0(std::span<const Tensor> parts) {
  if (parts.empty()) throw Error("ShapeMismatch", "stack of zero tensors");
  Shape s = parts[0].shape();
  std::int64_t n = 0;
  for (const auto& p : parts) {
    Shape ps = p.shape();
    if (ps.size() != s.size() || !std::equal(ps.begin() + 1, ps.end(), s.begin() + 1))
      throw Error("ShapeMismatch", "stack of mismatched shapes");
    n += ps[0];
  }
  s[0] = n;
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(shape_numel(s)));
  for (const auto& p : parts) d.insert(d.end(), p.vec().begin(), p.vec().end());
  return Tensor(std::move(s), std::move(d));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

bool Tensor::bit_equal(const Tensor& o) const {
  return shape_ == o.shape_ &&
         (data_.empty() || std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(double)) == 0);
}

void require_shape(const Tensor& t, const Shape& s, const char* what) {
  if (t.shape() != s)
    throw Error("ShapeMismatch", std::string(what) + ": expected " + shape_str(s) + ", got " + shape_str(t.shape()));
}

}  // namespace slgan
