#include "narrative/nn/tensor.h"

#include "narrative/error.h"

namespace narrative::nn {

Tensor& GradientBuffer::operator[](const std::string& name) {
  auto it = grads_.find(name);
  if (it == grads_.end()) throw ArgumentError("no gradient slot named " + name);
  return it->second;
}

const Tensor& GradientBuffer::at(const std::string& name) const {
  auto it = grads_.find(name);
  if (it == grads_.end()) throw ArgumentError("no gradient slot named " + name);
  return it->second;
}

void GradientBuffer::add(const GradientBuffer& other) {
  for (const auto& [name, g] : other.grads_) (*this)[name] += g;
}

void GradientBuffer::scale(double factor) {
  for (auto& [name, g] : grads_) g *= factor;
}

void GradientBuffer::set_zero() {
  for (auto& [name, g] : grads_) g.setZero();
}

Tensor& ParameterSet::add(const std::string& name, Tensor init) {
  if (params_.count(name)) throw ArgumentError("duplicate parameter " + name);
  Parameter p;
  p.grad = Tensor::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  return params_.emplace(name, std::move(p)).first->second.value;
}

const Tensor& ParameterSet::value(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ArgumentError("unknown parameter " + name);
  return it->second.value;
}

Tensor& ParameterSet::value(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ArgumentError("unknown parameter " + name);
  return it->second.value;
}

const Tensor& ParameterSet::grad(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ArgumentError("unknown parameter " + name);
  return it->second.grad;
}

Tensor& ParameterSet::grad(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ArgumentError("unknown parameter " + name);
  return it->second.grad;
}

std::vector<std::string> ParameterSet::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, p] : params_) out.push_back(name);
  return out;
}

size_t ParameterSet::num_scalars() const {
  size_t n = 0;
  for (const auto& [name, p] : params_) n += static_cast<size_t>(p.value.size());
  return n;
}

GradientBuffer ParameterSet::make_gradient_buffer() const {
  GradientBuffer buf;
  for (const auto& [name, p] : params_) {
    buf.grads_.emplace(name, Tensor::Zero(p.value.rows(), p.value.cols()));
  }
  return buf;
}

void ParameterSet::zero_grad() {
  for (auto& [name, p] : params_) p.grad.setZero();
}

void ParameterSet::accumulate(const GradientBuffer& buffer) {
  for (const auto& [name, g] : buffer.tensors()) {
    Tensor& slot = grad(name);
    if (slot.rows() != g.rows() || slot.cols() != g.cols()) {
      throw ShapeError("gradient shape mismatch for " + name);
    }
    slot += g;
  }
}

nlohmann::json ParameterSet::to_json() const {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, p] : params_) {
    nlohmann::json entry;
    entry["shape"] = {p.value.rows(), p.value.cols()};
    entry["data"] = std::vector<double>(p.value.data(), p.value.data() + p.value.size());
    params[name] = std::move(entry);
  }
  nlohmann::json j;
  j["format_version"] = kParameterFormatVersion;
  j["parameters"] = std::move(params);
  return j;
}

ParameterSet ParameterSet::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != kParameterFormatVersion) {
      throw DataError("unsupported parameter format version");
    }
    ParameterSet set;
    for (const auto& [name, entry] : j.at("parameters").items()) {
      const auto shape = entry.at("shape").get<std::vector<long>>();
      const auto data = entry.at("data").get<std::vector<double>>();
      if (shape.size() != 2 || shape[0] * shape[1] != static_cast<long>(data.size())) {
        throw DataError("parameter " + name + ": data length does not match shape");
      }
      Tensor t(shape[0], shape[1]);
      std::copy(data.begin(), data.end(), t.data());
      set.add(name, std::move(t));
    }
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed parameter snapshot: ") + e.what());
  }
}

bool ParameterSet::same_values(const ParameterSet& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (const auto& [name, p] : params_) {
    auto it = other.params_.find(name);
    if (it == other.params_.end()) return false;
    if (p.value.rows() != it->second.value.rows() ||
        p.value.cols() != it->second.value.cols()) {
      return false;
    }
    if (p.value != it->second.value) return false;
  }
  return true;
}

}  // namespace narrative::nn
