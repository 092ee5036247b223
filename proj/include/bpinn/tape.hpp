#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "bpinn/errors.hpp"
#include "bpinn/jet.hpp"

namespace bpinn {

enum class JetPart : std::uint8_t { value = 0, dx = 1, dxx = 2 };

struct JetRef {
  std::uint32_t node;
};
struct ScalarRef {
  std::uint32_t node;
};

/// Records the primitive operations of a jet forward pass (affine layers,
/// tanh layers) plus the scalar expressions that combine jet components
/// into a loss, then replays them backward to produce the gradient of the
/// final scalar with respect to every parameter touched.
///
/// Layer granularity: one node per affine or activation stage. An affine
/// node references its weight/bias blocks by offset into the flat
/// parameter vector bound at construction; the bound storage must stay
/// alive and unmodified until backward() has run.
///
/// Jet vectors are stored as three contiguous rows (value, d/dx, d2/dx2)
/// so each derivative order propagates through W with the same kernel.
template <class Scalar>
class Tape {
 public:
  explicit Tape(std::span<const Scalar> params) : params_(params) {}

  /// Point the tape at a (same-sized) parameter buffer. Nodes recorded
  /// before the rebind are invalidated; call reset() first.
  void rebind(std::span<const Scalar> params) { params_ = params; }

  /// Drop all recorded nodes but keep the arena capacity.
  void reset() {
    jet_nodes_.clear();
    scalar_nodes_.clear();
    jets_.clear();
    terms_.clear();
  }

  std::size_t parameter_count() const { return params_.size(); }

  // ---- jet forward ------------------------------------------------------

  /// Seed node (x, 1, 0): the network input as a function of itself.
  JetRef input(Scalar x) {
    const std::uint32_t buf = alloc_rows(1);
    jets_[buf + 0] = x;
    jets_[buf + 1] = Scalar(1);
    jets_[buf + 2] = Scalar(0);
    jet_nodes_.push_back({JetOp::input, 0, 0, 0, 1, 1, buf});
    return {static_cast<std::uint32_t>(jet_nodes_.size() - 1)};
  }

  /// Seed node with arbitrary given jets (constants with respect to the
  /// parameters).
  JetRef jet_input(std::span<const Jet<Scalar>> jets) {
    const auto w = static_cast<std::uint32_t>(jets.size());
    const std::uint32_t buf = alloc_rows(w);
    for (std::uint32_t i = 0; i < w; ++i) {
      jets_[buf + i] = jets[i].v;
      jets_[buf + w + i] = jets[i].d1;
      jets_[buf + 2 * std::size_t(w) + i] = jets[i].d2;
    }
    jet_nodes_.push_back({JetOp::input, 0, 0, 0, w, w, buf});
    return {static_cast<std::uint32_t>(jet_nodes_.size() - 1)};
  }

  /// s = W a + b with W (out_w x in_w, row-major) at params[w_off] and b
  /// at params[b_off]. Derivative rows propagate as s.d = W a.d.
  JetRef affine(std::uint32_t w_off, std::uint32_t b_off, std::uint32_t in_w,
                std::uint32_t out_w, JetRef in) {
    const JetNode& src = jet_nodes_.at(in.node);
    if (src.width != in_w)
      throw ConfigError("affine: input width " + std::to_string(src.width) +
                        " does not match weight columns " + std::to_string(in_w));
    if (std::size_t(w_off) + std::size_t(in_w) * out_w > params_.size() ||
        std::size_t(b_off) + out_w > params_.size())
      throw ConfigError("affine: parameter block exceeds bound parameter vector");

    const std::uint32_t src_buf = src.buf;  // alloc_rows may reallocate jets_
    const std::uint32_t buf = alloc_rows(out_w);
    const Scalar* W = params_.data() + w_off;
    const Scalar* b = params_.data() + b_off;
    for (int r = 0; r < 3; ++r) {
      const Scalar* a = jets_.data() + src_buf + std::size_t(r) * in_w;
      Scalar* out = jets_.data() + buf + std::size_t(r) * out_w;
      for (std::uint32_t i = 0; i < out_w; ++i) {
        Scalar acc = (r == 0) ? b[i] : Scalar(0);
        const Scalar* wrow = W + std::size_t(i) * in_w;
        for (std::uint32_t j = 0; j < in_w; ++j) acc += wrow[j] * a[j];
        out[i] = acc;
      }
    }
    jet_nodes_.push_back({JetOp::affine, in.node, w_off, b_off, in_w, out_w, buf});
    return {static_cast<std::uint32_t>(jet_nodes_.size() - 1)};
  }

  /// Elementwise tanh with jet chain rule.
  JetRef tanh(JetRef in) {
    const JetNode& src = jet_nodes_.at(in.node);
    const std::uint32_t w = src.width;
    const std::uint32_t src_buf = src.buf;
    const std::uint32_t buf = alloc_rows(w);
    const Scalar* sv = jets_.data() + src_buf;
    const Scalar* sd1 = sv + w;
    const Scalar* sd2 = sd1 + w;
    Scalar* ov = jets_.data() + buf;
    Scalar* od1 = ov + w;
    Scalar* od2 = od1 + w;
    for (std::uint32_t i = 0; i < w; ++i) {
      const Scalar f = std::tanh(sv[i]);
      const Scalar fp = tanh_d1(f);
      ov[i] = f;
      od1[i] = fp * sd1[i];
      od2[i] = tanh_d2(f) * sd1[i] * sd1[i] + fp * sd2[i];
    }
    jet_nodes_.push_back({JetOp::tanh, in.node, 0, 0, w, w, buf});
    return {static_cast<std::uint32_t>(jet_nodes_.size() - 1)};
  }

  Jet<Scalar> jet(JetRef ref, std::uint32_t unit = 0) const {
    const JetNode& n = jet_nodes_.at(ref.node);
    const std::size_t w = n.width;
    return {jets_[n.buf + unit], jets_[n.buf + w + unit], jets_[n.buf + 2 * w + unit]};
  }

  // ---- scalar expressions over jet components ---------------------------

  ScalarRef part(JetRef jref, JetPart p, std::uint32_t unit = 0) {
    const JetNode& n = jet_nodes_.at(jref.node);
    const Scalar val = jets_[n.buf + std::size_t(static_cast<std::uint8_t>(p)) * n.width + unit];
    scalar_nodes_.push_back({ScalarOp::jet_part, jref.node, unit,
                             static_cast<std::uint8_t>(p), Scalar(0), val});
    return {static_cast<std::uint32_t>(scalar_nodes_.size() - 1)};
  }

  /// bias + sum_i coeff_i * x_i, accumulated in term order.
  ScalarRef linear(std::span<const std::pair<ScalarRef, Scalar>> terms, Scalar bias = Scalar(0)) {
    const std::uint32_t begin = static_cast<std::uint32_t>(terms_.size());
    Scalar acc = bias;
    for (const auto& [ref, c] : terms) {
      acc += c * scalar_nodes_.at(ref.node).value;
      terms_.push_back({ref.node, c});
    }
    scalar_nodes_.push_back({ScalarOp::linear, begin,
                             static_cast<std::uint32_t>(terms_.size()), 0, bias, acc});
    return {static_cast<std::uint32_t>(scalar_nodes_.size() - 1)};
  }

  ScalarRef mul(ScalarRef a, ScalarRef b) {
    const Scalar val = scalar_nodes_.at(a.node).value * scalar_nodes_.at(b.node).value;
    scalar_nodes_.push_back({ScalarOp::mul, a.node, b.node, 0, Scalar(0), val});
    return {static_cast<std::uint32_t>(scalar_nodes_.size() - 1)};
  }

  ScalarRef square(ScalarRef a) {
    const Scalar v = scalar_nodes_.at(a.node).value;
    scalar_nodes_.push_back({ScalarOp::square, a.node, 0, 0, Scalar(0), v * v});
    return {static_cast<std::uint32_t>(scalar_nodes_.size() - 1)};
  }

  Scalar value(ScalarRef ref) const { return scalar_nodes_.at(ref.node).value; }

  // ---- backward ----------------------------------------------------------

  /// Gradient of the last recorded scalar node (the loss) scaled by
  /// loss_adjoint, with respect to the bound parameters. Each parameter
  /// receives exactly one accumulated adjoint.
  void backward(Scalar loss_adjoint, std::span<Scalar> grad) {
    if (scalar_nodes_.empty())
      throw UsageError("backward: no forward pass ending in a scalar loss was recorded");
    if (grad.size() != params_.size())
      throw UsageError("backward: gradient buffer size does not match parameter count");

    std::fill(grad.begin(), grad.end(), Scalar(0));
    jet_adj_.assign(jets_.size(), Scalar(0));
    scalar_adj_.assign(scalar_nodes_.size(), Scalar(0));
    scalar_adj_.back() = loss_adjoint;

    // Scalar nodes only depend on earlier scalar/jet nodes, and jet nodes
    // never depend on scalars, so sweeping all scalars first is a valid
    // reverse topological order.
    for (std::size_t i = scalar_nodes_.size(); i-- > 0;) {
      const ScalarNode& n = scalar_nodes_[i];
      const Scalar a = scalar_adj_[i];
      if (a == Scalar(0)) continue;
      switch (n.op) {
        case ScalarOp::jet_part: {
          const JetNode& jn = jet_nodes_[n.a];
          jet_adj_[jn.buf + std::size_t(n.part) * jn.width + n.b] += a;
          break;
        }
        case ScalarOp::linear:
          for (std::uint32_t t = n.a; t < n.b; ++t)
            scalar_adj_[terms_[t].first] += a * terms_[t].second;
          break;
        case ScalarOp::mul:
          scalar_adj_[n.a] += a * scalar_nodes_[n.b].value;
          scalar_adj_[n.b] += a * scalar_nodes_[n.a].value;
          break;
        case ScalarOp::square:
          scalar_adj_[n.a] += a * Scalar(2) * scalar_nodes_[n.a].value;
          break;
      }
    }

    for (std::size_t i = jet_nodes_.size(); i-- > 0;) {
      const JetNode& n = jet_nodes_[i];
      switch (n.op) {
        case JetOp::input:
          break;  // d(loss)/dx is not tracked
        case JetOp::affine: {
          const JetNode& src = jet_nodes_[n.in];
          const Scalar* W = params_.data() + n.w_off;
          for (int r = 0; r < 3; ++r) {
            const Scalar* sbar = jet_adj_.data() + n.buf + std::size_t(r) * n.width;
            const Scalar* avals = jets_.data() + src.buf + std::size_t(r) * n.in_w;
            Scalar* abar = jet_adj_.data() + src.buf + std::size_t(r) * n.in_w;
            for (std::uint32_t i2 = 0; i2 < n.width; ++i2) {
              const Scalar s = sbar[i2];
              if (s == Scalar(0)) continue;
              const Scalar* wrow = W + std::size_t(i2) * n.in_w;
              Scalar* gw = grad.data() + n.w_off + std::size_t(i2) * n.in_w;
              for (std::uint32_t j = 0; j < n.in_w; ++j) {
                gw[j] += s * avals[j];
                abar[j] += s * wrow[j];
              }
            }
          }
          const Scalar* sbar_v = jet_adj_.data() + n.buf;
          for (std::uint32_t i2 = 0; i2 < n.width; ++i2) grad[n.b_off + i2] += sbar_v[i2];
          break;
        }
        case JetOp::tanh: {
          const JetNode& src = jet_nodes_[n.in];
          const std::uint32_t w = n.width;
          const Scalar* f = jets_.data() + n.buf;  // outputs hold tanh(s)
          const Scalar* sd1 = jets_.data() + src.buf + w;
          const Scalar* sd2 = jets_.data() + src.buf + 2 * std::size_t(w);
          const Scalar* av = jet_adj_.data() + n.buf;
          const Scalar* a1 = av + w;
          const Scalar* a2 = a1 + w;
          Scalar* bv = jet_adj_.data() + src.buf;
          Scalar* b1 = bv + w;
          Scalar* b2 = b1 + w;
          for (std::uint32_t i2 = 0; i2 < w; ++i2) {
            const Scalar fp = tanh_d1(f[i2]);
            const Scalar fpp = tanh_d2(f[i2]);
            const Scalar fppp = tanh_d3(f[i2]);
            bv[i2] += av[i2] * fp + a1[i2] * fpp * sd1[i2] +
                      a2[i2] * (fppp * sd1[i2] * sd1[i2] + fpp * sd2[i2]);
            b1[i2] += a1[i2] * fp + a2[i2] * Scalar(2) * fpp * sd1[i2];
            b2[i2] += a2[i2] * fp;
          }
          break;
        }
      }
    }
  }

  std::vector<Scalar> backward(Scalar loss_adjoint = Scalar(1)) {
    std::vector<Scalar> grad(params_.size());
    backward(loss_adjoint, grad);
    return grad;
  }

 private:
  enum class JetOp : std::uint8_t { input, affine, tanh };
  enum class ScalarOp : std::uint8_t { jet_part, linear, mul, square };

  struct JetNode {
    JetOp op;
    std::uint32_t in;     // producing jet node
    std::uint32_t w_off;  // affine only
    std::uint32_t b_off;  // affine only
    std::uint32_t in_w;
    std::uint32_t width;
    std::uint32_t buf;  // offset of 3*width scalars in jets_
  };

  struct ScalarNode {
    ScalarOp op;
    std::uint32_t a;  // operand / jet node / term range begin
    std::uint32_t b;  // operand / unit index / term range end
    std::uint8_t part;
    Scalar bias;
    Scalar value;
  };

  std::uint32_t alloc_rows(std::uint32_t width) {
    const std::uint32_t off = static_cast<std::uint32_t>(jets_.size());
    jets_.resize(jets_.size() + 3 * std::size_t(width));
    return off;
  }

  std::span<const Scalar> params_;
  std::vector<JetNode> jet_nodes_;
  std::vector<ScalarNode> scalar_nodes_;
  std::vector<Scalar> jets_;
  std::vector<std::pair<std::uint32_t, Scalar>> terms_;
  std::vector<Scalar> jet_adj_;
  std::vector<Scalar> scalar_adj_;
};

}  // namespace bpinn
