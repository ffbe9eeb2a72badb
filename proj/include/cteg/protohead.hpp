#pragma once

#include <cstddef>
#include <vector>

#include "cteg/params.hpp"
#include "cteg/tensor.hpp"

namespace cteg {

/// Mean of K support representations (Eq: c_j = (1/K) sum_k s_{j,k}).
inline Tensor prototype(const std::vector<Tensor>& support_reps) {
  require(!support_reps.empty(), "empty_support", "prototype of an empty support set");
  if (support_reps.size() == 1) return support_reps[0];
  return mean_rows(stack_rows(support_reps));
}

/// Squared Euclidean distances from the query to each prototype row -> [N].
inline Tensor distance_distribution(const Tensor& query_rep, const Tensor& prototypes) {
  return sq_dist_rows(query_rep, prototypes);
}

/// Nearest relation: argmin over delta, ties to the smallest index.
inline int predict(const std::vector<double>& delta) {
  require(!delta.empty(), "empty_input", "predict over empty distances");
  int best = 0;
  for (int j = 1; j < static_cast<int>(delta.size()); ++j) {
    if (delta[j] < delta[best]) best = j;
  }
  return best;
}

inline int predict(const Tensor& delta) { return predict(delta.values()); }

/// Confusion projection: delta_bar = tanh(W^c delta + b^c), entries in (-1, 1).
/// W^c is square [N, N] — one score per candidate relation — so a trained
/// head is tied to its way count.
inline Tensor confusion_projection(const Tensor& delta, const Tensor& wc, const Tensor& bc) {
  return tanh_op(affine(wc, delta, bc));
}

/// The trainable projection parameters.
struct ProtoHead {
  Tensor wc, bc;

  static ProtoHead create(ParamStore& store, int n_way, Rng& rng) {
    ProtoHead h;
    const auto n = static_cast<std::size_t>(n_way);
    h.wc = store.create("proto.wc", {n, n}, rng);
    h.bc = store.create_zeros("proto.bc", {n});
    return h;
  }

  static ProtoHead load(const ParamStore& store) {
    return ProtoHead{store.get("proto.wc"), store.get("proto.bc")};
  }

  Tensor project(const Tensor& delta) const { return confusion_projection(delta, wc, bc); }
};

}  // namespace cteg
