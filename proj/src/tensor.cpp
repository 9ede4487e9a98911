#include "sadda/tensor.hpp"

#include <cmath>
#include <sstream>

namespace sadda {

namespace {

void validate_dims(const std::vector<std::size_t>& dims) {
  if (dims.empty() || dims.size() > kMaxRank) {
    throw ContractViolation("shape rank must be 1.." + std::to_string(kMaxRank) +
                            ", got " + std::to_string(dims.size()));
  }
  for (std::size_t d : dims) {
    if (d == 0) throw ContractViolation("shape extents must be positive");
  }
}

}  // namespace

Shape::Shape(std::initializer_list<std::size_t> dims) : dims_(dims) {
  validate_dims(dims_);
}

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  validate_dims(dims_);
}

std::size_t Shape::numel() const {
  std::size_t n = 1;
  for (std::size_t d : dims_) n *= d;
  return n;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << 'x';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

void shape_error(const std::string& what, const Shape& a, const Shape& b) {
  throw ContractViolation(what + ": shape mismatch " + a.str() + " vs " +
                          b.str());
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill)
    : shape_(std::move(shape)), data_(shape_.numel(), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_.numel()) {
    throw ContractViolation("tensor of shape " + shape_.str() + " needs " +
                            std::to_string(shape_.numel()) + " values, got " +
                            std::to_string(data_.size()));
  }
}

template <typename T>
T Tensor<T>::item() const {
  if (data_.size() != 1) {
    throw ContractViolation("item() on non-scalar tensor " + shape_.str());
  }
  return data_[0];
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape.numel() != shape_.numel()) shape_error("reshape", shape_, shape);
  return Tensor(std::move(shape), data_);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  for (T v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tensor<long double>;

}  // namespace sadda
