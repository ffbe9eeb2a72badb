#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cteg/params.hpp"
#include "cteg/tensor.hpp"

namespace cteg {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compare analytic gradients against central finite differences.
/// `f` must be a deterministic scalar function that rebuilds its graph from
/// the store on every call.
inline GradCheckResult grad_check(const std::function<Tensor()>& f, ParamStore& params,
                                  double epsilon = 1e-5) {
  params.zero_grad();
  Tensor loss = f();
  backward(loss);

  // snapshot analytic gradients before perturbing anything
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params.all()) analytic.push_back(p.tensor.grad());

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.all().size(); ++pi) {
    auto& p = params.all()[pi];
    auto& values = p.tensor.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + epsilon;
      const double up = f().value();
      values[i] = saved - epsilon;
      const double down = f().value();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[pi][i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-4});
      const double rel = std::fabs(a - numeric) / denom;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = p.name;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace cteg
