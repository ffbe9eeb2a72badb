#pragma once

#include <map>
#include <string>
#include <vector>

#include "cteg/error.hpp"
#include "cteg/rng.hpp"
#include "cteg/tensor.hpp"

namespace cteg {

/// A named trainable tensor.
struct Parameter {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

/// Flat registry of model parameters. Creation order is deterministic and is
/// the checkpoint serialization order; lookup by unique name.
class ParamStore {
 public:
  /// Create a parameter initialized uniform(-init_range, init_range).
  Tensor create(const std::string& name, std::vector<std::size_t> shape, Rng& rng,
                double init_range = 0.05) {
    Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
    auto& v = t.mutable_values();
    for (auto& x : v) x = uniform_real(rng, -init_range, init_range);
    add(name, t);
    return t;
  }

  /// Create a zero-initialized parameter (biases).
  Tensor create_zeros(const std::string& name, std::vector<std::size_t> shape) {
    Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
    add(name, t);
    return t;
  }

  /// Create a constant-filled parameter (layer-norm gains).
  Tensor create_filled(const std::string& name, std::vector<std::size_t> shape, double fill) {
    Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
    for (auto& x : t.mutable_values()) x = fill;
    add(name, t);
    return t;
  }

  void add(const std::string& name, Tensor t, bool trainable = true) {
    require(!index_.count(name), "duplicate_parameter", "parameter '" + name + "' already exists");
    index_[name] = params_.size();
    params_.push_back({name, std::move(t), trainable});
  }

  Tensor get(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "unknown_parameter", "no parameter named '" + name + "'");
    return params_[it->second].tensor;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }

  std::size_t total_values() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace cteg
