#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "bpinn/errors.hpp"
#include "bpinn/jet.hpp"
#include "bpinn/tape.hpp"

namespace bpinn {

/// Affine-stack parameter count for a dense in -> units x layers -> out
/// network (weights plus biases of every layer).
constexpr std::size_t mlp_parameter_count(std::size_t in_width, std::size_t units,
                                          std::size_t hidden_layers, std::size_t out_width) {
  std::size_t count = units * in_width + units;  // first hidden layer
  for (std::size_t l = 1; l < hidden_layers; ++l) count += units * units + units;
  count += out_width * units + out_width;  // output layer
  return count;
}

/// Scalar-in scalar-out MLP shape: hidden_layers tanh layers of
/// hidden_units each, identity output.
struct Architecture {
  std::uint32_t hidden_layers = 3;
  std::uint32_t hidden_units = 30;

  void validate() const {
    if (hidden_layers < 1 || hidden_units < 1)
      throw ConfigError("architecture requires at least one hidden layer and one unit");
  }

  std::uint32_t affine_count() const { return hidden_layers + 1; }
  std::uint32_t layer_in(std::uint32_t l) const { return l == 0 ? 1u : hidden_units; }
  std::uint32_t layer_out(std::uint32_t l) const {
    return l == hidden_layers ? 1u : hidden_units;
  }
  std::size_t parameter_count() const {
    return mlp_parameter_count(1, hidden_units, hidden_layers, 1);
  }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// All weights and biases of one network, flat-indexed. Layout per affine
/// layer l = 0..n_l: W^(l) row-major, then b^(l). The unit of knowledge
/// transfer between time steps.
template <class Scalar>
class MlpParams {
 public:
  MlpParams() { live_.fetch_add(1, std::memory_order_relaxed); }

  explicit MlpParams(Architecture arch) : arch_(arch) {
    arch.validate();
    build_offsets();
    data_.assign(arch_.parameter_count(), Scalar(0));
    live_.fetch_add(1, std::memory_order_relaxed);
  }

  MlpParams(const MlpParams& o) : arch_(o.arch_), data_(o.data_), w_off_(o.w_off_), b_off_(o.b_off_) {
    live_.fetch_add(1, std::memory_order_relaxed);
  }
  MlpParams(MlpParams&& o) noexcept
      : arch_(o.arch_), data_(std::move(o.data_)), w_off_(std::move(o.w_off_)), b_off_(std::move(o.b_off_)) {
    live_.fetch_add(1, std::memory_order_relaxed);
  }
  MlpParams& operator=(const MlpParams&) = default;
  MlpParams& operator=(MlpParams&&) noexcept = default;
  ~MlpParams() { live_.fetch_sub(1, std::memory_order_relaxed); }

  /// Fan-based uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases;
  /// bit-reproducible for a fixed seed.
  static MlpParams init(Architecture arch, std::uint64_t seed) {
    MlpParams p(arch);
    std::mt19937_64 rng(seed);
    for (std::uint32_t l = 0; l < arch.affine_count(); ++l) {
      const double fan_in = arch.layer_in(l);
      const double fan_out = arch.layer_out(l);
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-limit, limit);
      Scalar* w = p.data_.data() + p.w_off_[l];
      const std::size_t n = std::size_t(arch.layer_in(l)) * arch.layer_out(l);
      for (std::size_t i = 0; i < n; ++i) w[i] = static_cast<Scalar>(dist(rng));
    }
    return p;
  }

  static MlpParams zeros(Architecture arch) { return MlpParams(arch); }

  const Architecture& arch() const { return arch_; }
  std::size_t size() const { return data_.size(); }
  std::span<Scalar> values() { return data_; }
  std::span<const Scalar> values() const { return data_; }

  std::uint32_t w_offset(std::uint32_t l) const { return w_off_[l]; }
  std::uint32_t b_offset(std::uint32_t l) const { return b_off_[l]; }
  std::span<Scalar> weights(std::uint32_t l) {
    return {data_.data() + w_off_[l], std::size_t(arch_.layer_in(l)) * arch_.layer_out(l)};
  }
  std::span<Scalar> bias(std::uint32_t l) {
    return {data_.data() + b_off_[l], arch_.layer_out(l)};
  }
  std::span<const Scalar> weights(std::uint32_t l) const {
    return {data_.data() + w_off_[l], std::size_t(arch_.layer_in(l)) * arch_.layer_out(l)};
  }
  std::span<const Scalar> bias(std::uint32_t l) const {
    return {data_.data() + b_off_[l], arch_.layer_out(l)};
  }

  friend bool operator==(const MlpParams& a, const MlpParams& b) {
    return a.arch_ == b.arch_ && a.data_ == b.data_;
  }

  /// Number of MlpParams instances currently alive; lets tests pin the
  /// solver's two-network memory contract.
  static long live_count() { return live_.load(std::memory_order_relaxed); }

 private:
  void build_offsets() {
    w_off_.resize(arch_.affine_count());
    b_off_.resize(arch_.affine_count());
    std::uint32_t off = 0;
    for (std::uint32_t l = 0; l < arch_.affine_count(); ++l) {
      w_off_[l] = off;
      off += arch_.layer_in(l) * arch_.layer_out(l);
      b_off_[l] = off;
      off += arch_.layer_out(l);
    }
  }

  Architecture arch_{};
  std::vector<Scalar> data_;
  std::vector<std::uint32_t> w_off_;
  std::vector<std::uint32_t> b_off_;

  inline static std::atomic<long> live_{0};
};

/// Knowledge transfer: an independent deep copy, bit-identical at the
/// moment of transfer. Training the copy leaves the source untouched.
template <class Scalar>
MlpParams<Scalar> transfer(const MlpParams<Scalar>& source) {
  return source;
}

/// Derivative-free forward pass.
template <class Scalar>
Scalar forward_value(const MlpParams<Scalar>& p, Scalar x) {
  const Architecture& arch = p.arch();
  std::vector<Scalar> a(arch.hidden_units), s(arch.hidden_units);
  a[0] = x;
  std::uint32_t cur_w = 1;
  for (std::uint32_t l = 0; l < arch.affine_count(); ++l) {
    const std::uint32_t out_w = arch.layer_out(l);
    const Scalar* W = p.values().data() + p.w_offset(l);
    const Scalar* b = p.values().data() + p.b_offset(l);
    for (std::uint32_t i = 0; i < out_w; ++i) {
      Scalar acc = b[i];
      const Scalar* wrow = W + std::size_t(i) * cur_w;
      for (std::uint32_t j = 0; j < cur_w; ++j) acc += wrow[j] * a[j];
      s[i] = acc;
    }
    if (l + 1 < arch.affine_count())
      for (std::uint32_t i = 0; i < out_w; ++i) a[i] = std::tanh(s[i]);
    else
      a[0] = s[0];
    cur_w = out_w;
  }
  return a[0];
}

/// Forward pass carrying (u, u_x, u_xx); no tape, for evaluation only.
template <class Scalar>
Jet<Scalar> forward_jet(const MlpParams<Scalar>& p, Scalar x) {
  const Architecture& arch = p.arch();
  const std::uint32_t n = arch.hidden_units;
  std::vector<Scalar> av(n), a1(n), a2(n), sv(n), s1(n), s2(n);
  av[0] = x;
  a1[0] = Scalar(1);
  a2[0] = Scalar(0);
  std::uint32_t cur_w = 1;
  for (std::uint32_t l = 0; l < arch.affine_count(); ++l) {
    const std::uint32_t out_w = arch.layer_out(l);
    const Scalar* W = p.values().data() + p.w_offset(l);
    const Scalar* b = p.values().data() + p.b_offset(l);
    for (std::uint32_t i = 0; i < out_w; ++i) {
      const Scalar* wrow = W + std::size_t(i) * cur_w;
      Scalar accv = b[i], acc1 = 0, acc2 = 0;
      for (std::uint32_t j = 0; j < cur_w; ++j) {
        accv += wrow[j] * av[j];
        acc1 += wrow[j] * a1[j];
        acc2 += wrow[j] * a2[j];
      }
      sv[i] = accv;
      s1[i] = acc1;
      s2[i] = acc2;
    }
    if (l + 1 < arch.affine_count()) {
      for (std::uint32_t i = 0; i < out_w; ++i) {
        const Jet<Scalar> a = jet_tanh(Jet<Scalar>{sv[i], s1[i], s2[i]});
        av[i] = a.v;
        a1[i] = a.d1;
        a2[i] = a.d2;
      }
    } else {
      av[0] = sv[0];
      a1[0] = s1[0];
      a2[0] = s2[0];
    }
    cur_w = out_w;
  }
  return {av[0], a1[0], a2[0]};
}

/// Recorded forward pass; the returned jet holds (u, u_x, u_xx) and the
/// tape can subsequently produce parameter gradients of any scalar built
/// from it.
template <class Scalar>
JetRef forward_jet(Tape<Scalar>& tape, const MlpParams<Scalar>& p, Scalar x) {
  const Architecture& arch = p.arch();
  JetRef cur = tape.input(x);
  for (std::uint32_t l = 0; l < arch.affine_count(); ++l) {
    cur = tape.affine(p.w_offset(l), p.b_offset(l), arch.layer_in(l), arch.layer_out(l), cur);
    if (l + 1 < arch.affine_count()) cur = tape.tanh(cur);
  }
  return cur;
}

}  // namespace bpinn
