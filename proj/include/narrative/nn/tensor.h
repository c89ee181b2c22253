#ifndef NARRATIVE_NN_TENSOR_H_
#define NARRATIVE_NN_TENSOR_H_

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace narrative::nn {

// Row-major double matrix. Vectors are stored as 1 x n rows.
using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Named gradient accumulators mirroring a ParameterSet's shapes. Workers
// fill their own buffer; buffers are summed into the set in a fixed order.
class GradientBuffer {
 public:
  Tensor& operator[](const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return grads_.count(name) > 0; }

  void add(const GradientBuffer& other);
  void scale(double factor);
  void set_zero();

  const std::map<std::string, Tensor>& tensors() const { return grads_; }
  std::map<std::string, Tensor>& tensors() { return grads_; }

 private:
  friend class ParameterSet;
  std::map<std::string, Tensor> grads_;
};

struct Parameter {
  Tensor value;
  Tensor grad;
};

class ParameterSet {
 public:
  // Registers a parameter; the gradient slot starts at zero.
  Tensor& add(const std::string& name, Tensor init);

  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  const Tensor& value(const std::string& name) const;
  Tensor& value(const std::string& name);
  const Tensor& grad(const std::string& name) const;
  Tensor& grad(const std::string& name);

  std::vector<std::string> names() const;
  size_t size() const { return params_.size(); }
  size_t num_scalars() const;

  GradientBuffer make_gradient_buffer() const;
  void zero_grad();
  void accumulate(const GradientBuffer& buffer);

  const std::map<std::string, Parameter>& entries() const { return params_; }

  // {"format_version": 1, "parameters": {name: {"shape": [r, c], "data": [...]}}}
  nlohmann::json to_json() const;
  static ParameterSet from_json(const nlohmann::json& j);

  bool same_values(const ParameterSet& other) const;

 private:
  std::map<std::string, Parameter> params_;
};

constexpr int kParameterFormatVersion = 1;

}  // namespace narrative::nn

#endif  // NARRATIVE_NN_TENSOR_H_
