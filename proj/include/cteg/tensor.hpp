#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "cteg/error.hpp"

namespace cteg {

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One value in the computation graph. Interior nodes are created per forward
/// pass; parameter leaves persist across passes and accumulate gradients until
/// explicitly zeroed.
struct Node {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<double> grad;  // same size as values, zero-initialized
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  // Accumulates d(loss)/d(parent) into parents' grad given this node's grad.
  std::function<void(Node&)> backward_fn;

  std::size_t numel() const { return values.size(); }
};

inline std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream ss;
  ss << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) ss << (i ? "," : "") << shape[i];
  ss << "]";
  return ss.str();
}

}  // namespace detail

/// Dense 64-bit float tensor with reverse-mode autodiff. Value semantics over
/// a shared graph node; ops never mutate their inputs. Rank 0 is a scalar.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
    return from(std::move(shape), {}, requires_grad);
  }

  static Tensor from(std::vector<std::size_t> shape, std::vector<double> values,
                     bool requires_grad = false) {
    auto node = std::make_shared<detail::Node>();
    const std::size_t n = detail::shape_numel(shape);
    if (values.empty()) values.assign(n, 0.0);
    require(values.size() == n, "shape_mismatch",
            "value count " + std::to_string(values.size()) + " does not match shape " +
                detail::shape_str(shape));
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->grad.assign(n, 0.0);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor scalar(double v) { return from({}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->numel(); }
  std::size_t dim(std::size_t i) const { return node_->shape[i]; }
  bool requires_grad() const { return node_->requires_grad; }

  const std::vector<double>& values() const { return node_->values; }
  const std::vector<double>& grad() const { return node_->grad; }

  double value() const {
    require(numel() == 1, "not_scalar", "value() on tensor of shape " + detail::shape_str(shape()));
    return node_->values[0];
  }
  double at(std::size_t i) const { return node_->values[i]; }
  double at(std::size_t i, std::size_t j) const { return node_->values[i * dim(1) + j]; }

  /// Mutable access for the optimizer and initializers; graph ops never use it.
  std::vector<double>& mutable_values() { return node_->values; }
  std::vector<double>& mutable_grad() { return node_->grad; }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

  detail::NodePtr node() const { return node_; }

  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}

 private:
  detail::NodePtr node_;
};

namespace detail {

inline Tensor make_op(std::vector<std::size_t> shape, std::vector<double> values,
                      std::vector<Tensor> inputs, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->grad.assign(node->values.size(), 0.0);
  for (const Tensor& t : inputs) {
    node->parents.push_back(t.node());
    node->requires_grad = node->requires_grad || t.node()->requires_grad;
  }
  if (node->requires_grad) node->backward_fn = std::move(backward_fn);
  return Tensor(std::move(node));
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), "shape_mismatch",
          std::string(op) + ": shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

inline void check_rank2(const Tensor& t, const char* op) {
  require(t.rank() == 2, "shape_mismatch",
          std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and scalar ops

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  return detail::make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
    for (int p = 0; p < 2; ++p) {
      auto& parent = *n.parents[p];
      if (!parent.requires_grad) continue;
      for (std::size_t i = 0; i < n.grad.size(); ++i) parent.grad[i] += n.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  return detail::make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += n.grad[i];
      if (pb.requires_grad) pb.grad[i] -= n.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  return detail::make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += n.grad[i] * pb.values[i];
      if (pb.requires_grad) pb.grad[i] += n.grad[i] * pa.values[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * s;
  return detail::make_op(a.shape(), std::move(out), {a}, [s](detail::Node& n) {
    auto& p = *n.parents[0];
    for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] * s;
  });
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

inline Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a.at(i)));
  return detail::make_op(a.shape(), std::move(out), {a}, [](detail::Node& n) {
    auto& p = *n.parents[0];
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double y = n.values[i];
      p.grad[i] += n.grad[i] * y * (1.0 - y);
    }
  });
}

inline Tensor tanh_op(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.at(i));
  return detail::make_op(a.shape(), std::move(out), {a}, [](detail::Node& n) {
    auto& p = *n.parents[0];
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double y = n.values[i];
      p.grad[i] += n.grad[i] * (1.0 - y * y);
    }
  });
}

inline Tensor gelu(const Tensor& a) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.at(i);
    out[i] = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
  }
  return detail::make_op(a.shape(), std::move(out), {a}, [=](detail::Node& n) {
    auto& p = *n.parents[0];
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double x = p.values[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
      const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
      p.grad[i] += n.grad[i] * (cdf + x * pdf);
    }
  });
}

// ---------------------------------------------------------------------------
// Matrix ops

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::check_rank2(a, "matmul");
  detail::check_rank2(b, "matmul");
  const std::size_t r = a.dim(0), k = a.dim(1), c = b.dim(1);
  require(b.dim(0) == k, "shape_mismatch",
          "matmul: " + detail::shape_str(a.shape()) + " x " + detail::shape_str(b.shape()));
  std::vector<double> out(r * c, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = av[i * k + kk];
      const double* brow = &bv[kk * c];
      double* orow = &out[i * c];
      for (std::size_t j = 0; j < c; ++j) orow[j] += aik * brow[j];
    }
  }
  return detail::make_op({r, c}, std::move(out), {a, b}, [r, k, c](detail::Node& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    // dA = dC B^T
    if (pa.requires_grad) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
          const double g = n.grad[i * c + j];
          const double* brow = &pb.values[0] + j;  // column j of B
          double* arow = &pa.grad[i * k];
          for (std::size_t kk = 0; kk < k; ++kk) arow[kk] += g * brow[kk * c];
        }
      }
    }
    // dB = A^T dC
    if (pb.requires_grad) {
      for (std::size_t kk = 0; kk < k; ++kk) {
        for (std::size_t i = 0; i < r; ++i) {
          const double aik = pa.values[i * k + kk];
          const double* grow = &n.grad[i * c];
          double* brow = &pb.grad[kk * c];
          for (std::size_t j = 0; j < c; ++j) brow[j] += aik * grow[j];
        }
      }
    }
  });
}

inline Tensor transpose(const Tensor& a) {
  detail::check_rank2(a, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.at(i, j);
  return detail::make_op({c, r}, std::move(out), {a}, [r, c](detail::Node& n) {
    auto& p = *n.parents[0];
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) p.grad[i * c + j] += n.grad[j * r + i];
  });
}

/// A[r,c] + b[c], bias broadcast over rows.
inline Tensor add_rowvec(const Tensor& a, const Tensor& b) {
  detail::check_rank2(a, "add_rowvec");
  require(b.rank() == 1 && b.dim(0) == a.dim(1), "shape_mismatch",
          "add_rowvec: " + detail::shape_str(a.shape()) + " + " + detail::shape_str(b.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.at(i, j) + b.at(j);
  return detail::make_op({r, c}, std::move(out), {a, b}, [r, c](detail::Node& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const double g = n.grad[i * c + j];
        if (pa.requires_grad) pa.grad[i * c + j] += g;
        if (pb.requires_grad) pb.grad[j] += g;
      }
    }
  });
}

/// A[r,c] * v[c] elementwise per row (gates broadcast over query rows).
inline Tensor mul_rowvec(const Tensor& a, const Tensor& v) {
  detail::check_rank2(a, "mul_rowvec");
  require(v.rank() == 1 && v.dim(0) == a.dim(1), "shape_mismatch",
          "mul_rowvec: " + detail::shape_str(a.shape()) + " * " + detail::shape_str(v.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.at(i, j) * v.at(j);
  return detail::make_op({r, c}, std::move(out), {a, v}, [r, c](detail::Node& n) {
    auto& pa = *n.parents[0];
    auto& pv = *n.parents[1];
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const double g = n.grad[i * c + j];
        if (pa.requires_grad) pa.grad[i * c + j] += g * pv.values[j];
        if (pv.requires_grad) pv.grad[j] += g * pa.values[i * c + j];
      }
    }
  });
}

/// A[r,c] * u[r], scaling row i by u[i] (final-hidden-state gating).
inline Tensor mul_colvec(const Tensor& a, const Tensor& u) {
  detail::check_rank2(a, "mul_colvec");
  require(u.rank() == 1 && u.dim(0) == a.dim(0), "shape_mismatch",
          "mul_colvec: " + detail::shape_str(a.shape()) + " * " + detail::shape_str(u.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.at(i, j) * u.at(i);
  return detail::make_op({r, c}, std::move(out), {a, u}, [r, c](detail::Node& n) {
    auto& pa = *n.parents[0];
    auto& pu = *n.parents[1];
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const double g = n.grad[i * c + j];
        if (pa.requires_grad) pa.grad[i * c + j] += g * pu.values[i];
        if (pu.requires_grad) pu.grad[i] += g * pa.values[i * c + j];
      }
    }
  });
}

inline Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t width) {
  detail::check_rank2(a, "slice_cols");
  require(start + width <= a.dim(1), "shape_mismatch", "slice_cols: out of range");
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * width);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < width; ++j) out[i * width + j] = a.at(i, start + j);
  return detail::make_op({r, width}, std::move(out), {a}, [r, c, start, width](detail::Node& n) {
    auto& p = *n.parents[0];
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < width; ++j)
        p.grad[i * c + start + j] += n.grad[i * width + j];
  });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "empty_input", "concat_cols of nothing");
  const std::size_t r = parts[0].dim(0);
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::check_rank2(p, "concat_cols");
    require(p.dim(0) == r, "shape_mismatch", "concat_cols: row counts differ");
    total += p.dim(1);
  }
  std::vector<double> out(r * total);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.dim(1);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[i * total + off + j] = p.at(i, j);
    off += c;
  }
  std::vector<std::size_t> widths;
  for (const auto& p : parts) widths.push_back(p.dim(1));
  return detail::make_op({r, total}, std::move(out), parts, [r, total, widths](detail::Node& n) {
    std::size_t off = 0;
    for (std::size_t pi = 0; pi < n.parents.size(); ++pi) {
      auto& p = *n.parents[pi];
      const std::size_t c = widths[pi];
      if (p.requires_grad) {
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) p.grad[i * c + j] += n.grad[i * total + off + j];
      }
      off += c;
    }
  });
}

/// Stack rank-1 tensors of equal width into a [k, d] matrix.
inline Tensor stack_rows(const std::vector<Tensor>& rows) {
  require(!rows.empty(), "empty_input", "stack_rows of nothing");
  const std::size_t d = rows[0].numel();
  for (const auto& t : rows) {
    require(t.rank() == 1 && t.numel() == d, "shape_mismatch", "stack_rows: widths differ");
  }
  const std::size_t k = rows.size();
  std::vector<double> out(k * d);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = rows[i].at(j);
  return detail::make_op({k, d}, std::move(out), rows, [k, d](detail::Node& n) {
    for (std::size_t i = 0; i < k; ++i) {
      auto& p = *n.parents[i];
      if (!p.requires_grad) continue;
      for (std::size_t j = 0; j < d; ++j) p.grad[j] += n.grad[i * d + j];
    }
  });
}

/// Mean over axis 0: [k, d] -> [d] (prototype averaging).
inline Tensor mean_rows(const Tensor& a) {
  detail::check_rank2(a, "mean_rows");
  const std::size_t k = a.dim(0), d = a.dim(1);
  require(k >= 1, "empty_input", "mean_rows of empty matrix");
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += a.at(i, j);
  for (std::size_t j = 0; j < d; ++j) out[j] /= static_cast<double>(k);
  return detail::make_op({d}, std::move(out), {a}, [k, d](detail::Node& n) {
    auto& p = *n.parents[0];
    const double inv = 1.0 / static_cast<double>(k);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < d; ++j) p.grad[i * d + j] += n.grad[j] * inv;
  });
}

/// Elementwise max over axis 0: [n, d] -> [d]. Ties route gradient to the
/// first maximal row (deterministic).
inline Tensor maxpool_rows(const Tensor& a) {
  detail::check_rank2(a, "maxpool_rows");
  const std::size_t n = a.dim(0), d = a.dim(1);
  require(n >= 1, "empty_input", "maxpool_rows of empty matrix");
  std::vector<double> out(d);
  std::vector<std::size_t> argmax(d, 0);
  for (std::size_t j = 0; j < d; ++j) {
    double best = a.at(0, j);
    std::size_t bi = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (a.at(i, j) > best) {
        best = a.at(i, j);
        bi = i;
      }
    }
    out[j] = best;
    argmax[j] = bi;
  }
  return detail::make_op({d}, std::move(out), {a}, [d, argmax](detail::Node& n2) {
    auto& p = *n2.parents[0];
    for (std::size_t j = 0; j < d; ++j) p.grad[argmax[j] * d + j] += n2.grad[j];
  });
}

// ---------------------------------------------------------------------------
// Softmax family (row-wise over the last axis; rank-1 treated as one row)

namespace detail {

inline void softmax_rows(const std::vector<double>& x, std::vector<double>& y, std::size_t rows,
                         std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* in = &x[i * cols];
    double* out = &y[i * cols];
    double m = in[0];
    for (std::size_t j = 1; j < cols; ++j) m = std::max(m, in[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      out[j] = std::exp(in[j] - m);
      z += out[j];
    }
    for (std::size_t j = 0; j < cols; ++j) out[j] /= z;
  }
}

inline std::pair<std::size_t, std::size_t> rowcol(const Tensor& t) {
  require(t.rank() == 1 || t.rank() == 2, "shape_mismatch",
          "softmax: expected rank 1 or 2, got " + shape_str(t.shape()));
  if (t.rank() == 1) return {1, t.dim(0)};
  return {t.dim(0), t.dim(1)};
}

}  // namespace detail

inline Tensor softmax(const Tensor& a) {
  const auto [rows, cols] = detail::rowcol(a);
  require(cols >= 1, "empty_input", "softmax over empty axis");
  std::vector<double> out(a.numel());
  detail::softmax_rows(a.values(), out, rows, cols);
  return detail::make_op(a.shape(), std::move(out), {a}, [rows, cols](detail::Node& n) {
    auto& p = *n.parents[0];
    for (std::size_t i = 0; i < rows; ++i) {
      const double* y = &n.values[i * cols];
      const double* dy = &n.grad[i * cols];
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += dy[j] * y[j];
      double* dx = &p.grad[i * cols];
      for (std::size_t j = 0; j < cols; ++j) dx[j] += (dy[j] - dot) * y[j];
    }
  });
}

inline Tensor log_softmax(const Tensor& a) {
  const auto [rows, cols] = detail::rowcol(a);
  require(cols >= 1, "empty_input", "log_softmax over empty axis");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < rows; ++i) {
    const double* in = &a.values()[i * cols];
    double* o = &out[i * cols];
    double m = in[0];
    for (std::size_t j = 1; j < cols; ++j) m = std::max(m, in[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += std::exp(in[j] - m);
    const double logz = m + std::log(z);
    for (std::size_t j = 0; j < cols; ++j) o[j] = in[j] - logz;
  }
  return detail::make_op(a.shape(), std::move(out), {a}, [rows, cols](detail::Node& n) {
    auto& p = *n.parents[0];
    for (std::size_t i = 0; i < rows; ++i) {
      const double* logy = &n.values[i * cols];
      const double* dy = &n.grad[i * cols];
      double sum = 0.0;
      for (std::size_t j = 0; j < cols; ++j) sum += dy[j];
      double* dx = &p.grad[i * cols];
      for (std::size_t j = 0; j < cols; ++j) dx[j] += dy[j] - std::exp(logy[j]) * sum;
    }
  });
}

// ---------------------------------------------------------------------------
// Normalization, lookup, reductions

/// Layer norm over the last axis with learned gain/bias.
inline Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-5) {
  const auto [rows, cols] = detail::rowcol(a);
  require(gain.rank() == 1 && gain.dim(0) == cols && bias.rank() == 1 && bias.dim(0) == cols,
          "shape_mismatch", "layer_norm: gain/bias width mismatch");
  std::vector<double> out(a.numel());
  std::vector<double> inv_sigma(rows), xhat(a.numel());
  for (std::size_t i = 0; i < rows; ++i) {
    const double* x = &a.values()[i * cols];
    double mu = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mu += x[j];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_sigma[i] = inv;
    for (std::size_t j = 0; j < cols; ++j) {
      xhat[i * cols + j] = (x[j] - mu) * inv;
      out[i * cols + j] = xhat[i * cols + j] * gain.at(j) + bias.at(j);
    }
  }
  return detail::make_op(
      a.shape(), std::move(out), {a, gain, bias},
      [rows, cols, inv_sigma, xhat](detail::Node& n) {
        auto& px = *n.parents[0];
        auto& pg = *n.parents[1];
        auto& pb = *n.parents[2];
        for (std::size_t i = 0; i < rows; ++i) {
          const double* dy = &n.grad[i * cols];
          const double* xh = &xhat[i * cols];
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t j = 0; j < cols; ++j) {
            const double gdy = dy[j] * pg.values[j];
            sum_g += gdy;
            sum_gx += gdy * xh[j];
            if (pg.requires_grad) pg.grad[j] += dy[j] * xh[j];
            if (pb.requires_grad) pb.grad[j] += dy[j];
          }
          if (!px.requires_grad) continue;
          const double invc = 1.0 / static_cast<double>(cols);
          for (std::size_t j = 0; j < cols; ++j) {
            const double gdy = dy[j] * pg.values[j];
            px.grad[i * cols + j] +=
                inv_sigma[i] * (gdy - sum_g * invc - xh[j] * sum_gx * invc);
          }
        }
      });
}

/// Row lookup: table [V, d] gathered by ids -> [n, d].
inline Tensor embed(const Tensor& table, const std::vector<int>& ids) {
  detail::check_rank2(table, "embed");
  const std::size_t v = table.dim(0), d = table.dim(1), n = ids.size();
  require(n >= 1, "empty_input", "embed of empty id sequence");
  for (int id : ids) {
    require(id >= 0 && static_cast<std::size_t>(id) < v, "index_out_of_range",
            "embedding id " + std::to_string(id) + " outside table of " + std::to_string(v));
  }
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &table.values()[static_cast<std::size_t>(ids[i]) * d];
    std::copy(row, row + d, &out[i * d]);
  }
  return detail::make_op({n, d}, std::move(out), {table}, [d, ids](detail::Node& n2) {
    auto& p = *n2.parents[0];
    for (std::size_t i = 0; i < ids.size(); ++i) {
      double* row = &p.grad[static_cast<std::size_t>(ids[i]) * d];
      const double* g = &n2.grad[i * d];
      for (std::size_t j = 0; j < d; ++j) row[j] += g[j];
    }
  });
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a.at(i);
  return detail::make_op({}, {s}, {a}, [](detail::Node& n) {
    auto& p = *n.parents[0];
    for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += n.grad[0];
  });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

/// Select one element of a rank-1 tensor as a scalar.
inline Tensor pick(const Tensor& a, std::size_t index) {
  require(a.rank() == 1, "shape_mismatch", "pick: expected rank-1 tensor");
  require(index < a.dim(0), "index_out_of_range", "pick: index out of range");
  return detail::make_op({}, {a.at(index)}, {a}, [index](detail::Node& n) {
    n.parents[0]->grad[index] += n.grad[0];
  });
}

/// ||a - b||^2 of two rank-1 tensors, as a scalar.
inline Tensor squared_euclidean(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "squared_euclidean");
  require(a.rank() == 1, "shape_mismatch", "squared_euclidean: expected rank-1 tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = a.at(i) - b.at(i);
    s += d * d;
  }
  return detail::make_op({}, {s}, {a, b}, [](detail::Node& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    for (std::size_t i = 0; i < pa.values.size(); ++i) {
      const double d = 2.0 * (pa.values[i] - pb.values[i]) * n.grad[0];
      if (pa.requires_grad) pa.grad[i] += d;
      if (pb.requires_grad) pb.grad[i] -= d;
    }
  });
}

/// Squared distances from q [d] to every row of protos [N, d] -> [N].
inline Tensor sq_dist_rows(const Tensor& q, const Tensor& protos) {
  require(q.rank() == 1, "shape_mismatch", "sq_dist_rows: query must be rank-1");
  detail::check_rank2(protos, "sq_dist_rows");
  const std::size_t n = protos.dim(0), d = protos.dim(1);
  require(q.dim(0) == d, "shape_mismatch",
          "sq_dist_rows: " + detail::shape_str(q.shape()) + " vs " +
              detail::shape_str(protos.shape()));
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = q.at(j) - protos.at(i, j);
      out[i] += diff * diff;
    }
  }
  return detail::make_op({n}, std::move(out), {q, protos}, [n, d](detail::Node& nd) {
    auto& pq = *nd.parents[0];
    auto& pp = *nd.parents[1];
    for (std::size_t i = 0; i < n; ++i) {
      const double g = nd.grad[i];
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = 2.0 * (pq.values[j] - pp.values[i * d + j]) * g;
        if (pq.requires_grad) pq.grad[j] += diff;
        if (pp.requires_grad) pp.grad[i * d + j] -= diff;
      }
    }
  });
}

/// y = W x + b for W [m, n], x [n], b [m] -> [m].
inline Tensor affine(const Tensor& w, const Tensor& x, const Tensor& b) {
  detail::check_rank2(w, "affine");
  require(x.rank() == 1 && x.dim(0) == w.dim(1), "shape_mismatch",
          "affine: " + detail::shape_str(w.shape()) + " x " + detail::shape_str(x.shape()));
  require(b.rank() == 1 && b.dim(0) == w.dim(0), "shape_mismatch", "affine: bias width mismatch");
  const std::size_t m = w.dim(0), n = w.dim(1);
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    double s = b.at(i);
    for (std::size_t j = 0; j < n; ++j) s += w.at(i, j) * x.at(j);
    out[i] = s;
  }
  return detail::make_op({m}, std::move(out), {w, x, b}, [m, n](detail::Node& nd) {
    auto& pw = *nd.parents[0];
    auto& px = *nd.parents[1];
    auto& pb = *nd.parents[2];
    for (std::size_t i = 0; i < m; ++i) {
      const double g = nd.grad[i];
      if (pb.requires_grad) pb.grad[i] += g;
      for (std::size_t j = 0; j < n; ++j) {
        if (pw.requires_grad) pw.grad[i * n + j] += g * px.values[j];
        if (px.requires_grad) px.grad[j] += g * pw.values[i * n + j];
      }
    }
  });
}

/// Per-row scalar head: out[i] = H[i,:] . w + b, for H [n, h], w [h], b scalar.
inline Tensor affine_rows(const Tensor& h, const Tensor& w, const Tensor& b) {
  detail::check_rank2(h, "affine_rows");
  require(w.rank() == 1 && w.dim(0) == h.dim(1), "shape_mismatch",
          "affine_rows: weight width mismatch");
  require(b.numel() == 1, "shape_mismatch", "affine_rows: bias must be scalar");
  const std::size_t n = h.dim(0), d = h.dim(1);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b.at(0);
    for (std::size_t j = 0; j < d; ++j) s += h.at(i, j) * w.at(j);
    out[i] = s;
  }
  return detail::make_op({n}, std::move(out), {h, w, b}, [n, d](detail::Node& nd) {
    auto& ph = *nd.parents[0];
    auto& pw = *nd.parents[1];
    auto& pb = *nd.parents[2];
    for (std::size_t i = 0; i < n; ++i) {
      const double g = nd.grad[i];
      if (pb.requires_grad) pb.grad[0] += g;
      for (std::size_t j = 0; j < d; ++j) {
        if (ph.requires_grad) ph.grad[i * d + j] += g * pw.values[j];
        if (pw.requires_grad) pw.grad[j] += g * ph.values[i * d + j];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Backward pass

/// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
/// reachable node that requires grad; zero parameter grads between passes.
/// One backward per constructed graph (interior grads are not reset here).
inline void backward(const Tensor& loss) {
  require(loss.numel() == 1, "not_scalar", "backward() needs a scalar loss");
  if (!loss.requires_grad()) return;

  std::vector<detail::Node*> order;
  std::unordered_set<const detail::Node*> seen;
  // iterative post-order DFS
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !seen.count(parent)) {
        seen.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

}  // namespace cteg
