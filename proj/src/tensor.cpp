#include "udkit/tensor.hpp"

namespace udkit {

std::string shape_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

std::string shape_string(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + ", " + std::to_string(m.cols()) + ")";
}

Parameter::Parameter(std::string name, Shape shape, ParamGroup group, bool decay)
    : name_(std::move(name)), shape_(std::move(shape)), group_(group), decay_(decay) {
  if (shape_.empty() || shape_.size() > 2) {
    throw ShapeError("parameter " + name_ + " must have rank 1 or 2");
  }
  const auto rows = shape_.size() == 1 ? 1 : static_cast<Eigen::Index>(shape_[0]);
  const auto cols = static_cast<Eigen::Index>(shape_.back());
  value = Matrix::Zero(rows, cols);
  grad = Matrix::Zero(rows, cols);
}

void Parameter::init_normal(Rng& rng, double stddev) {
  for (Eigen::Index i = 0; i < value.size(); ++i) value.data()[i] = stddev * rng.normal();
}

}  // namespace udkit
