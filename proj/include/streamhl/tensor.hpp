#pragma once

// Dense row-major double tensor plus a reverse-mode tape.
//
// A Tensor is a cheap handle onto a heap node holding flat data and (when
// needed) a same-shaped gradient buffer. Ops live on Tape: each op computes
// its forward result eagerly and records a backward closure; Tape::backward
// replays the closures in exact reverse recording order. No views or
// strides -- reshape/transpose copy. Single-threaded per tape.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace streamhl {

using Shape = std::vector<std::size_t>;

namespace detail {

inline std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;    // empty until first accumulation
  bool requires_grad = false;  // leaf parameter flag
  bool needs_grad = false;     // true if on a differentiable path
};

inline void ensure_grad(TensorNode& n) {
  if (n.grad.empty()) n.grad.assign(n.data.size(), 0.0);
}

}  // namespace detail

inline std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

class Tensor {
 public:
  Tensor() : node_(std::make_shared<detail::TensorNode>()) {}

  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false) {
    validate_shape(shape);
    if (detail::numel(shape) != data.size())
      throw std::invalid_argument("Tensor: shape " + shape_str(shape) +
                                  " does not match data length " +
                                  std::to_string(data.size()));
    Tensor t;
    t.node_->shape = std::move(shape);
    t.node_->data = std::move(data);
    t.node_->requires_grad = requires_grad;
    t.node_->needs_grad = requires_grad;
    if (requires_grad) detail::ensure_grad(*t.node_);
    return t;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::size_t n = detail::numel(shape);
    return from_data(std::move(shape), std::vector<double>(n, 0.0),
                     requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    std::size_t n = detail::numel(shape);
    return from_data(std::move(shape), std::vector<double>(n, value),
                     requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return from_data({1}, {value}, requires_grad);
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool needs_grad() const { return node_->needs_grad; }

  const std::vector<double>& data() const { return node_->data; }
  std::vector<double>& mutable_data() { return node_->data; }

  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<double>& grad() const {
    if (node_->grad.empty())
      throw std::runtime_error("Tensor: gradient not populated");
    return node_->grad;
  }
  std::vector<double>& mutable_grad() {
    detail::ensure_grad(*node_);
    return node_->grad;
  }
  void zero_grad() {
    if (!node_->grad.empty())
      std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  double value() const {
    if (size() != 1)
      throw std::invalid_argument("Tensor::value: tensor of shape " +
                                  shape_str(shape()) + " is not scalar");
    return node_->data[0];
  }

  double at(std::size_t i) const { return node_->data.at(i); }
  double at(std::size_t i, std::size_t j) const {
    check_rank(2);
    return node_->data[i * node_->shape[1] + j];
  }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  static void validate_shape(const Shape& shape) {
    for (std::size_t d : shape)
      if (d == 0)
        throw std::invalid_argument("Tensor: dimensions must be positive, got " +
                                    shape_str(shape));
  }
  void check_rank(std::size_t r) const {
    if (rank() != r)
      throw std::invalid_argument("Tensor: expected rank " + std::to_string(r) +
                                  ", got shape " + shape_str(shape()));
  }

  std::shared_ptr<detail::TensorNode> node_;
  friend class Tape;
};

enum class Reduce { kSum, kMean, kMax };

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t num_entries() const { return entries_.size(); }

  // ----- linear algebra -----

  Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    const std::size_t k2 = b.shape()[0], p = b.shape()[1];
    if (k != k2)
      throw std::invalid_argument("matmul: inner dimensions disagree: " +
                                  shape_str(a.shape()) + " vs " +
                                  shape_str(b.shape()));
    std::vector<double> out(m * p, 0.0);
    const auto& ad = a.data();
    const auto& bd = b.data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double av = ad[i * k + kk];
        const double* brow = &bd[kk * p];
        double* orow = &out[i * p];
        for (std::size_t j = 0; j < p; ++j) orow[j] += av * brow[j];
      }
    Tensor c = make_out({m, p}, std::move(out), {&a, &b});
    if (c.needs_grad()) {
      auto an = a.node_, bn = b.node_, cn = c.node_;
      record([an, bn, cn, m, k, p] {
        if (cn->grad.empty()) return;
        const auto& gc = cn->grad;
        if (an->needs_grad) {
          detail::ensure_grad(*an);
          // dA = dC * B^T
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t kk = 0; kk < k; ++kk) {
              double acc = 0.0;
              const double* gcrow = &gc[i * p];
              const double* brow = &bn->data[kk * p];
              for (std::size_t j = 0; j < p; ++j) acc += gcrow[j] * brow[j];
              an->grad[i * k + kk] += acc;
            }
        }
        if (bn->needs_grad) {
          detail::ensure_grad(*bn);
          // dB = A^T * dC
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t kk = 0; kk < k; ++kk) {
              const double av = an->data[i * k + kk];
              const double* gcrow = &gc[i * p];
              double* gbrow = &bn->grad[kk * p];
              for (std::size_t j = 0; j < p; ++j) gbrow[j] += av * gcrow[j];
            }
        }
      });
    }
    return c;
  }

  Tensor transpose(const Tensor& a) {
    require_rank(a, 2, "transpose");
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
    Tensor c = make_out({n, m}, std::move(out), {&a});
    if (c.needs_grad()) {
      auto an = a.node_, cn = c.node_;
      record([an, cn, m, n] {
        if (cn->grad.empty() || !an->needs_grad) return;
        detail::ensure_grad(*an);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            an->grad[i * n + j] += cn->grad[j * m + i];
      });
    }
    return c;
  }

  Tensor reshape(const Tensor& a, Shape shape) {
    if (detail::numel(shape) != a.size())
      throw std::invalid_argument("reshape: cannot reshape " +
                                  shape_str(a.shape()) + " to " +
                                  shape_str(shape));
    Tensor c = make_out(std::move(shape), a.data(), {&a});
    if (c.needs_grad()) {
      auto an = a.node_, cn = c.node_;
      record([an, cn] {
        if (cn->grad.empty() || !an->needs_grad) return;
        detail::ensure_grad(*an);
        for (std::size_t i = 0; i < cn->grad.size(); ++i)
          an->grad[i] += cn->grad[i];
      });
    }
    return c;
  }

  Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const Shape& s0 = parts[0].shape();
    if (axis >= s0.size())
      throw std::invalid_argument("concat: axis " + std::to_string(axis) +
                                  " out of range for shape " + shape_str(s0));
    Shape out_shape = s0;
    for (std::size_t t = 1; t < parts.size(); ++t) {
      const Shape& s = parts[t].shape();
      if (s.size() != s0.size())
        throw std::invalid_argument("concat: rank mismatch " + shape_str(s0) +
                                    " vs " + shape_str(s));
      for (std::size_t d = 0; d < s.size(); ++d)
        if (d != axis && s[d] != s0[d])
          throw std::invalid_argument("concat: incompatible shapes " +
                                      shape_str(s0) + " vs " + shape_str(s) +
                                      " on axis " + std::to_string(axis));
      out_shape[axis] += s[axis];
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s0[d];
    for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];
    std::vector<double> out(detail::numel(out_shape));
    const std::size_t out_stride = out_shape[axis] * inner;
    std::size_t offset = 0;  // offset within one outer block, in elements
    std::vector<std::size_t> part_offsets(parts.size());
    for (std::size_t t = 0; t < parts.size(); ++t) {
      part_offsets[t] = offset;
      const std::size_t ext = parts[t].shape()[axis] * inner;
      const auto& pd = parts[t].data();
      for (std::size_t o = 0; o < outer; ++o)
        std::copy(pd.begin() + o * ext, pd.begin() + (o + 1) * ext,
                  out.begin() + o * out_stride + offset);
      offset += ext;
    }
    std::vector<const Tensor*> ins;
    for (const auto& p : parts) ins.push_back(&p);
    Tensor c = make_out(std::move(out_shape), std::move(out), ins);
    if (c.needs_grad()) {
      std::vector<std::shared_ptr<detail::TensorNode>> pns;
      for (const auto& p : parts) pns.push_back(p.node_);
      auto cn = c.node_;
      record([pns, cn, part_offsets, outer, inner, out_stride, axis] {
        if (cn->grad.empty()) return;
        for (std::size_t t = 0; t < pns.size(); ++t) {
          auto& pn = *pns[t];
          if (!pn.needs_grad) continue;
          detail::ensure_grad(pn);
          const std::size_t ext = pn.shape[axis] * inner;
          for (std::size_t o = 0; o < outer; ++o) {
            const double* src = &cn->grad[o * out_stride + part_offsets[t]];
            double* dst = &pn.grad[o * ext];
            for (std::size_t i = 0; i < ext; ++i) dst[i] += src[i];
          }
        }
      });
    }
    return c;
  }

  // ----- elementwise -----

  Tensor add(const Tensor& a, const Tensor& b) {
    return binary(a, b, "add", [](double x, double y) { return x + y; },
                  [](double, double, double g, double& da, double& db) {
                    da += g;
                    db += g;
                  });
  }

  Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(a, b, "sub", [](double x, double y) { return x - y; },
                  [](double, double, double g, double& da, double& db) {
                    da += g;
                    db -= g;
                  });
  }

  Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(a, b, "mul", [](double x, double y) { return x * y; },
                  [](double x, double y, double g, double& da, double& db) {
                    da += g * y;
                    db += g * x;
                  });
  }

  Tensor scale(const Tensor& a, double c) {
    return unary(a, [c](double x) { return c * x; },
                 [c](double, double) { return c; });
  }

  Tensor add_const(const Tensor& a, double c) {
    return unary(a, [c](double x) { return x + c; },
                 [](double, double) { return 1.0; });
  }

  // x^p with constant exponent. Non-integer p requires x > 0.
  Tensor pow_const(const Tensor& a, double p) {
    const bool integral = p == std::floor(p) && p >= 0.0;
    if (!integral)
      for (double x : a.data())
        if (!(x > 0.0))
          throw std::domain_error(
              "pow_const: non-integer exponent requires positive base, got " +
              std::to_string(x));
    return unary(a, [p](double x) { return std::pow(x, p); },
                 [p](double x, double) { return p * std::pow(x, p - 1.0); });
  }

  Tensor sigmoid(const Tensor& a) {
    return unary(a,
                 [](double x) {
                   if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                   const double e = std::exp(x);
                   return e / (1.0 + e);
                 },
                 [](double, double y) { return y * (1.0 - y); });
  }

  Tensor exp(const Tensor& a) {
    return unary(a, [](double x) { return std::exp(x); },
                 [](double, double y) { return y; });
  }

  Tensor log(const Tensor& a) {
    for (double x : a.data())
      if (!(x > 0.0))
        throw std::domain_error("log: input must be strictly positive, got " +
                                std::to_string(x));
    return unary(a, [](double x) { return std::log(x); },
                 [](double x, double) { return 1.0 / x; });
  }

  Tensor relu(const Tensor& a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
  }

  // log(1 + e^x), overflow-safe.
  Tensor softplus(const Tensor& a) {
    return unary(a,
                 [](double x) {
                   return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
                 },
                 [](double x, double) {
                   if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                   const double e = std::exp(x);
                   return e / (1.0 + e);
                 });
  }

  // ----- reductions -----

  Tensor reduce_all(const Tensor& a, Reduce op) {
    const std::size_t n = a.size();
    double v;
    std::size_t argmax = 0;
    if (op == Reduce::kMax) {
      v = a.data()[0];
      for (std::size_t i = 1; i < n; ++i)
        if (a.data()[i] > v) {
          v = a.data()[i];
          argmax = i;
        }
    } else {
      v = 0.0;
      for (double x : a.data()) v += x;
      if (op == Reduce::kMean) v /= static_cast<double>(n);
    }
    Tensor c = make_out({1}, {v}, {&a});
    if (c.needs_grad()) {
      auto an = a.node_, cn = c.node_;
      record([an, cn, op, n, argmax] {
        if (cn->grad.empty() || !an->needs_grad) return;
        detail::ensure_grad(*an);
        const double g = cn->grad[0];
        switch (op) {
          case Reduce::kSum:
            for (auto& x : an->grad) x += g;
            break;
          case Reduce::kMean:
            for (auto& x : an->grad) x += g / static_cast<double>(n);
            break;
          case Reduce::kMax:
            an->grad[argmax] += g;
            break;
        }
      });
    }
    return c;
  }

  Tensor reduce(const Tensor& a, Reduce op, std::size_t axis) {
    if (axis >= a.rank())
      throw std::invalid_argument("reduce: axis " + std::to_string(axis) +
                                  " out of range for shape " +
                                  shape_str(a.shape()));
    const Shape& s = a.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
    for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
    const std::size_t len = s[axis];
    Shape out_shape;
    for (std::size_t d = 0; d < s.size(); ++d)
      if (d != axis) out_shape.push_back(s[d]);
    if (out_shape.empty()) out_shape = {1};
    std::vector<double> out(outer * inner);
    std::vector<std::size_t> argmax(op == Reduce::kMax ? outer * inner : 0);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * len * inner + i;
        if (op == Reduce::kMax) {
          double best = a.data()[base];
          std::size_t bj = 0;
          for (std::size_t j = 1; j < len; ++j) {
            const double x = a.data()[base + j * inner];
            if (x > best) {
              best = x;
              bj = j;
            }
          }
          out[o * inner + i] = best;
          argmax[o * inner + i] = bj;
        } else {
          double acc = 0.0;
          for (std::size_t j = 0; j < len; ++j) acc += a.data()[base + j * inner];
          out[o * inner + i] =
              op == Reduce::kMean ? acc / static_cast<double>(len) : acc;
        }
      }
    Tensor c = make_out(std::move(out_shape), std::move(out), {&a});
    if (c.needs_grad()) {
      auto an = a.node_, cn = c.node_;
      record([an, cn, op, outer, inner, len, argmax] {
        if (cn->grad.empty() || !an->needs_grad) return;
        detail::ensure_grad(*an);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < inner; ++i) {
            const double g = cn->grad[o * inner + i];
            const std::size_t base = o * len * inner + i;
            switch (op) {
              case Reduce::kSum:
                for (std::size_t j = 0; j < len; ++j)
                  an->grad[base + j * inner] += g;
                break;
              case Reduce::kMean:
                for (std::size_t j = 0; j < len; ++j)
                  an->grad[base + j * inner] += g / static_cast<double>(len);
                break;
              case Reduce::kMax:
                an->grad[base + argmax[o * inner + i] * inner] += g;
                break;
            }
          }
      });
    }
    return c;
  }

  // ----- softmax -----

  // Softmax along `axis` with an optional additive mask of the same shape
  // whose entries are 0 or -inf. Masked positions come out exactly 0.
  Tensor masked_softmax(const Tensor& a, const std::optional<Tensor>& mask,
                        std::size_t axis) {
    if (axis >= a.rank())
      throw std::invalid_argument("masked_softmax: axis " +
                                  std::to_string(axis) +
                                  " out of range for shape " +
                                  shape_str(a.shape()));
    const double* mk = nullptr;
    if (mask) {
      if (mask->shape() != a.shape())
        throw std::invalid_argument("masked_softmax: mask shape " +
                                    shape_str(mask->shape()) +
                                    " does not match input " +
                                    shape_str(a.shape()));
      for (double m : mask->data())
        if (m != 0.0 && m != -std::numeric_limits<double>::infinity())
          throw std::invalid_argument(
              "masked_softmax: mask entries must be 0 or -inf");
      mk = mask->data().data();
    }
    const Shape& s = a.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
    for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
    const std::size_t len = s[axis];
    std::vector<double> out(a.size());
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * len * inner + i;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t idx = base + j * inner;
          const double x = a.data()[idx] + (mk ? mk[idx] : 0.0);
          mx = std::max(mx, x);
        }
        if (mx == -std::numeric_limits<double>::infinity())
          throw std::domain_error(
              "masked_softmax: fully masked row (degenerate)");
        double sum = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t idx = base + j * inner;
          const double x = a.data()[idx] + (mk ? mk[idx] : 0.0);
          const double e = std::exp(x - mx);
          out[idx] = e;
          sum += e;
        }
        for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= sum;
      }
    Tensor c = make_out(a.shape(), std::move(out), {&a});
    if (c.needs_grad()) {
      auto an = a.node_, cn = c.node_;
      record([an, cn, outer, inner, len] {
        if (cn->grad.empty() || !an->needs_grad) return;
        detail::ensure_grad(*an);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t base = o * len * inner + i;
            double dot = 0.0;
            for (std::size_t j = 0; j < len; ++j) {
              const std::size_t idx = base + j * inner;
              dot += cn->grad[idx] * cn->data[idx];
            }
            for (std::size_t j = 0; j < len; ++j) {
              const std::size_t idx = base + j * inner;
              an->grad[idx] += cn->data[idx] * (cn->grad[idx] - dot);
            }
          }
      });
    }
    return c;
  }

  // ----- broadcasts, slices, gathers -----

  // x: (m,n) plus row vector b of length n, broadcast over rows.
  Tensor add_rowvec(const Tensor& x, const Tensor& b) {
    return rowvec_op(x, b, "add_rowvec",
                     [](double xv, double bv) { return xv + bv; },
                     /*d_dx=*/[](double, double) { return 1.0; },
                     /*d_db=*/[](double, double) { return 1.0; });
  }

  Tensor mul_rowvec(const Tensor& x, const Tensor& g) {
    return rowvec_op(x, g, "mul_rowvec",
                     [](double xv, double gv) { return xv * gv; },
                     [](double, double gv) { return gv; },
                     [](double xv, double) { return xv; });
  }

  // x plus scalar tensor s broadcast to every element.
  Tensor add_scalar_tensor(const Tensor& x, const Tensor& s) {
    if (s.size() != 1)
      throw std::invalid_argument("add_scalar_tensor: second operand of shape " +
                                  shape_str(s.shape()) + " is not scalar");
    const double sv = s.data()[0];
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x.data()[i] + sv;
    Tensor c = make_out(x.shape(), std::move(out), {&x, &s});
    if (c.needs_grad()) {
      auto xn = x.node_, sn = s.node_, cn = c.node_;
      record([xn, sn, cn] {
        if (cn->grad.empty()) return;
        if (xn->needs_grad) {
          detail::ensure_grad(*xn);
          for (std::size_t i = 0; i < cn->grad.size(); ++i)
            xn->grad[i] += cn->grad[i];
        }
        if (sn->needs_grad) {
          detail::ensure_grad(*sn);
          double acc = 0.0;
          for (double g : cn->grad) acc += g;
          sn->grad[0] += acc;
        }
      });
    }
    return c;
  }

  Tensor slice_cols(const Tensor& x, std::size_t j0, std::size_t width) {
    require_rank(x, 2, "slice_cols");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (j0 + width > n)
      throw std::invalid_argument("slice_cols: [" + std::to_string(j0) + "," +
                                  std::to_string(j0 + width) +
                                  ") out of range for " + shape_str(x.shape()));
    std::vector<double> out(m * width);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < width; ++j)
        out[i * width + j] = x.data()[i * n + j0 + j];
    Tensor c = make_out({m, width}, std::move(out), {&x});
    if (c.needs_grad()) {
      auto xn = x.node_, cn = c.node_;
      record([xn, cn, m, n, j0, width] {
        if (cn->grad.empty() || !xn->needs_grad) return;
        detail::ensure_grad(*xn);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < width; ++j)
            xn->grad[i * n + j0 + j] += cn->grad[i * width + j];
      });
    }
    return c;
  }

  // Row i of a (m,n) matrix as a (1,n) tensor.
  Tensor select_row(const Tensor& x, std::size_t i) {
    require_rank(x, 2, "select_row");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (i >= m)
      throw std::out_of_range("select_row: row " + std::to_string(i) +
                              " out of range for " + shape_str(x.shape()));
    std::vector<double> out(x.data().begin() + i * n,
                            x.data().begin() + (i + 1) * n);
    Tensor c = make_out({1, n}, std::move(out), {&x});
    if (c.needs_grad()) {
      auto xn = x.node_, cn = c.node_;
      record([xn, cn, i, n] {
        if (cn->grad.empty() || !xn->needs_grad) return;
        detail::ensure_grad(*xn);
        for (std::size_t j = 0; j < n; ++j) xn->grad[i * n + j] += cn->grad[j];
      });
    }
    return c;
  }

  // (1,n) row repeated m times into (m,n).
  Tensor repeat_rows(const Tensor& row, std::size_t m) {
    require_rank(row, 2, "repeat_rows");
    if (row.shape()[0] != 1)
      throw std::invalid_argument("repeat_rows: expected (1,n), got " +
                                  shape_str(row.shape()));
    const std::size_t n = row.shape()[1];
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
      std::copy(row.data().begin(), row.data().end(), out.begin() + i * n);
    Tensor c = make_out({m, n}, std::move(out), {&row});
    if (c.needs_grad()) {
      auto rn = row.node_, cn = c.node_;
      record([rn, cn, m, n] {
        if (cn->grad.empty() || !rn->needs_grad) return;
        detail::ensure_grad(*rn);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            rn->grad[j] += cn->grad[i * n + j];
      });
    }
    return c;
  }

  // Elements of a rank-1 tensor at the given indices.
  Tensor gather(const Tensor& x, const std::vector<std::size_t>& indices) {
    require_rank(x, 1, "gather");
    if (indices.empty()) throw std::invalid_argument("gather: empty index set");
    std::vector<double> out(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] >= x.size())
        throw std::out_of_range("gather: index " + std::to_string(indices[i]) +
                                " out of range for " + shape_str(x.shape()));
      out[i] = x.data()[indices[i]];
    }
    Tensor c = make_out({indices.size()}, std::move(out), {&x});
    if (c.needs_grad()) {
      auto xn = x.node_, cn = c.node_;
      record([xn, cn, indices] {
        if (cn->grad.empty() || !xn->needs_grad) return;
        detail::ensure_grad(*xn);
        for (std::size_t i = 0; i < indices.size(); ++i)
          xn->grad[indices[i]] += cn->grad[i];
      });
    }
    return c;
  }

  // Rows of x reordered: out row i = x row perm[i]. perm must be a bijection.
  Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& perm) {
    require_rank(x, 2, "permute_rows");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (perm.size() != m)
      throw std::invalid_argument("permute_rows: permutation length " +
                                  std::to_string(perm.size()) +
                                  " does not match rows of " +
                                  shape_str(x.shape()));
    std::vector<bool> seen(m, false);
    for (std::size_t p : perm) {
      if (p >= m || seen[p])
        throw std::invalid_argument("permute_rows: not a permutation");
      seen[p] = true;
    }
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
      std::copy(x.data().begin() + perm[i] * n,
                x.data().begin() + (perm[i] + 1) * n, out.begin() + i * n);
    Tensor c = make_out({m, n}, std::move(out), {&x});
    if (c.needs_grad()) {
      auto xn = x.node_, cn = c.node_;
      record([xn, cn, perm, n] {
        if (cn->grad.empty() || !xn->needs_grad) return;
        detail::ensure_grad(*xn);
        for (std::size_t i = 0; i < perm.size(); ++i)
          for (std::size_t j = 0; j < n; ++j)
            xn->grad[perm[i] * n + j] += cn->grad[i * n + j];
      });
    }
    return c;
  }

  // ----- custom op support -----

  // Creates a traced output whose backward is supplied by the caller. The
  // closure must guard on the output grad itself.
  Tensor adopt(Shape shape, std::vector<double> data,
               const std::vector<const Tensor*>& inputs) {
    return make_out(std::move(shape), std::move(data), inputs);
  }

  void record(std::function<void()> fn) { entries_.push_back(std::move(fn)); }

  // ----- backward -----

  // Seeds d(loss)/d(loss) = 1 and replays entries newest-first. Gradients
  // accumulate into leaf tensors (so per-sample backward calls within a
  // batch sum naturally); intermediate grads are reset on every call.
  void backward(const Tensor& loss) {
    if (loss.size() != 1)
      throw std::invalid_argument("backward: loss of shape " +
                                  shape_str(loss.shape()) + " is not scalar");
    for (auto& n : created_)
      if (!n->grad.empty()) std::fill(n->grad.begin(), n->grad.end(), 0.0);
    detail::ensure_grad(*loss.node_);
    loss.node_->grad[0] = 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  }

 private:
  static void require_rank(const Tensor& t, std::size_t r, const char* op) {
    if (t.rank() != r)
      throw std::invalid_argument(std::string(op) + ": expected rank " +
                                  std::to_string(r) + ", got " +
                                  shape_str(t.shape()));
  }

  Tensor make_out(Shape shape, std::vector<double> data,
                  const std::vector<const Tensor*>& inputs) {
    Tensor t = Tensor::from_data(std::move(shape), std::move(data));
    for (const Tensor* in : inputs)
      if (in->needs_grad()) t.node_->needs_grad = true;
    if (t.node_->needs_grad) created_.push_back(t.node_);
    return t;
  }

  template <typename F, typename DF>
  Tensor unary(const Tensor& a, F fwd, DF dfdx) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = fwd(a.data()[i]);
    Tensor c = make_out(a.shape(), std::move(out), {&a});
    if (c.needs_grad()) {
      auto an = a.node_, cn = c.node_;
      record([an, cn, dfdx] {
        if (cn->grad.empty() || !an->needs_grad) return;
        detail::ensure_grad(*an);
        for (std::size_t i = 0; i < cn->grad.size(); ++i)
          an->grad[i] += cn->grad[i] * dfdx(an->data[i], cn->data[i]);
      });
    }
    return c;
  }

  template <typename F, typename BF>
  Tensor binary(const Tensor& a, const Tensor& b, const char* name, F fwd,
                BF bwd) {
    if (a.shape() != b.shape())
      throw std::invalid_argument(std::string(name) + ": shape mismatch " +
                                  shape_str(a.shape()) + " vs " +
                                  shape_str(b.shape()));
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
      out[i] = fwd(a.data()[i], b.data()[i]);
    Tensor c = make_out(a.shape(), std::move(out), {&a, &b});
    if (c.needs_grad()) {
      auto an = a.node_, bn = b.node_, cn = c.node_;
      record([an, bn, cn, bwd] {
        if (cn->grad.empty()) return;
        const bool ga = an->needs_grad, gb = bn->needs_grad;
        if (ga) detail::ensure_grad(*an);
        if (gb) detail::ensure_grad(*bn);
        double sink = 0.0;
        for (std::size_t i = 0; i < cn->grad.size(); ++i)
          bwd(an->data[i], bn->data[i], cn->grad[i],
              ga ? an->grad[i] : sink, gb ? bn->grad[i] : sink);
      });
    }
    return c;
  }

  template <typename F, typename DX, typename DB>
  Tensor rowvec_op(const Tensor& x, const Tensor& b, const char* name, F fwd,
                   DX d_dx, DB d_db) {
    require_rank(x, 2, name);
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (b.rank() != 1 || b.shape()[0] != n)
      throw std::invalid_argument(std::string(name) + ": vector shape " +
                                  shape_str(b.shape()) +
                                  " does not match columns of " +
                                  shape_str(x.shape()));
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        out[i * n + j] = fwd(x.data()[i * n + j], b.data()[j]);
    Tensor c = make_out({m, n}, std::move(out), {&x, &b});
    if (c.needs_grad()) {
      auto xn = x.node_, bn = b.node_, cn = c.node_;
      record([xn, bn, cn, m, n, d_dx, d_db] {
        if (cn->grad.empty()) return;
        if (xn->needs_grad) {
          detail::ensure_grad(*xn);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
              xn->grad[i * n + j] += cn->grad[i * n + j] *
                                     d_dx(xn->data[i * n + j], bn->data[j]);
        }
        if (bn->needs_grad) {
          detail::ensure_grad(*bn);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
              bn->grad[j] += cn->grad[i * n + j] *
                             d_db(xn->data[i * n + j], bn->data[j]);
        }
      });
    }
    return c;
  }

  std::vector<std::function<void()>> entries_;
  std::vector<std::shared_ptr<detail::TensorNode>> created_;
};

}  // namespace streamhl
