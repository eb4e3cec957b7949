#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "udkit/rng.hpp"

namespace udkit {

// All tensors are rank <= 2 and stored row-major in 64-bit floats; rank-1
// tensors are single rows.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::string shape_string(const Matrix& m);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Which optimizer group a parameter belongs to: the pretrained encoder or
// everything else (task heads, layer attention).
enum class ParamGroup { kUnassigned, kEncoder, kTask };

class Parameter {
 public:
  // `decay` = false exempts biases and layer-norm gains from weight decay.
  Parameter(std::string name, Shape shape, ParamGroup group, bool decay = true);

  const std::string& name() const { return name_; }
  const Shape& shape() const { return shape_; }
  ParamGroup group() const { return group_; }
  bool decay() const { return decay_; }

  void zero_grad() { grad.setZero(); }
  void init_normal(Rng& rng, double stddev);

  Matrix value;
  Matrix grad;

 private:
  std::string name_;
  Shape shape_;
  ParamGroup group_;
  bool decay_;
};

}  // namespace udkit
