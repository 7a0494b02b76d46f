#include "crossda/nn/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "crossda/error.hpp"

namespace crossda::nn {

Shape::Shape(std::initializer_list<std::size_t> dims)
    : Shape(std::span<const std::size_t>(dims.begin(), dims.size())) {}

Shape::Shape(std::span<const std::size_t> dims) {
  if (dims.size() > kMaxRank) {
    throw Error(Errc::invalid_argument, "tensor rank " + std::to_string(dims.size()) + " exceeds 4");
  }
  std::copy(dims.begin(), dims.end(), dims_.begin());
  rank_ = dims.size();
}

std::size_t Shape::numel() const noexcept {
  std::size_t n = 1;
  for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
  return n;
}

bool Shape::operator==(const Shape& other) const noexcept {
  if (rank_ != other.rank_) return false;
  return std::equal(dims_.begin(), dims_.begin() + static_cast<std::ptrdiff_t>(rank_), other.dims_.begin());
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < rank_; ++i) {
    if (i) os << ',';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values) : shape_(shape), values_(std::move(values)) {
  if (values_.size() != shape_.numel()) {
    throw Error(Errc::dimension, "tensor value count " + std::to_string(values_.size()) +
                                     " does not match shape " + shape_.str());
  }
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace crossda::nn
