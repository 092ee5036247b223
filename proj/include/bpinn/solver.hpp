#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bpinn/errors.hpp"
#include "bpinn/field.hpp"
#include "bpinn/network.hpp"
#include "bpinn/optimizer.hpp"
#include "bpinn/tape.hpp"

namespace bpinn {

/// Ordered abscissae on [0,1]; endpoints carry the boundary penalty and
/// the n_s - 2 interior points carry the residual term.
template <class Scalar>
struct SampleSet {
  std::vector<Scalar> x;

  static SampleSet uniform(std::size_t ns) {
    if (ns < 3) throw ConfigError("sample set needs at least 3 points (interior + endpoints)");
    SampleSet s;
    s.x.resize(ns);
    for (std::size_t i = 0; i < ns; ++i)
      s.x[i] = static_cast<Scalar>(double(i) / double(ns - 1));
    return s;
  }

  void validate() const {
    if (x.size() < 3) throw ConfigError("sample set needs at least 3 points");
    if (x.front() != Scalar(0) || x.back() != Scalar(1))
      throw ConfigError("sample set must span [0,1] inclusive");
    for (std::size_t i = 1; i < x.size(); ++i)
      if (!(x[i] > x[i - 1])) throw ConfigError("sample abscissae must be strictly increasing");
  }

  std::size_t size() const { return x.size(); }
  std::size_t interior_count() const { return x.size() - 2; }
};

/// Every run parameter of one transfer-learning solve.
template <class Scalar>
struct SolverConfig {
  Scalar nu = Scalar(1);        // kinematic viscosity
  Scalar ht = Scalar(1e-3);     // time-step size
  std::size_t nt = 1;           // number of steps; final time = nt * ht
  std::size_t ns = 100;         // sample count
  Architecture arch{3, 30};
  TrainSettings train{};
  std::uint64_t seed = 0;

  void validate() const {
    arch.validate();
    if (!(ht > Scalar(0))) throw ConfigError("solver: time step must be positive");
    if (nt < 1) throw ConfigError("solver: need at least one time step");
    if (ns < 3) throw ConfigError("solver: need at least 3 samples");
    if (!(nu > Scalar(0))) throw ConfigError("solver: viscosity must be positive");
  }
};

/// Per-step training outcome.
struct TimeStepRecord {
  std::size_t k = 0;
  double t = 0.0;
  std::size_t epochs = 0;
  double loss = 0.0;
  std::optional<double> rel_error{};
  double wall_ms = 0.0;
  bool converged = false;
};

// ---- losses ---------------------------------------------------------------

/// Mean squared mismatch between the network and the initial condition
/// over all samples (endpoints included).
template <class Scalar, class U0>
Scalar initial_loss(const MlpParams<Scalar>& p, const SampleSet<Scalar>& samples, U0&& u0) {
  const Scalar w = Scalar(1) / static_cast<Scalar>(samples.size());
  Scalar acc = Scalar(0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Scalar d = forward_value(p, samples.x[i]) + (-static_cast<Scalar>(u0(samples.x[i])));
    acc += w * (d * d);
  }
  return acc;
}

/// Implicit-Euler defect at one point, from the new level's jet and the
/// previous level's value:
///   R = u_k - u_{k-1} - ht * (nu * u_k_xx - u_k * u_k_x).
template <class Scalar>
Scalar scheme_residual(const Jet<Scalar>& uk, Scalar ukm1, Scalar ht, Scalar nu) {
  return uk.v - ukm1 - ht * (nu * uk.d2 - uk.v * uk.d1);
}

template <class Scalar>
Scalar scheme_residual(const MlpParams<Scalar>& k_net, const MlpParams<Scalar>& km1_net,
                       Scalar x, Scalar ht, Scalar nu) {
  return scheme_residual(forward_jet(k_net, x), forward_value(km1_net, x), ht, nu);
}

template <class Scalar>
struct StepLossParts {
  Scalar residual = Scalar(0);  // mean |R|^2 over interior samples
  Scalar boundary = Scalar(0);  // (|u(0)|^2 + |u(1)|^2) / 2
  Scalar total = Scalar(0);     // residual + boundary, single addition
};

/// Training loss for time step k: interior residual mean plus boundary
/// penalty. The previous level enters only through its sampled values.
/// Arithmetic order matches StepLossFn's tape so the reported training
/// loss and this decomposition agree bit for bit.
template <class Scalar>
StepLossParts<Scalar> step_loss_parts(const MlpParams<Scalar>& k_net,
                                      std::span<const Scalar> km1_values,
                                      const SampleSet<Scalar>& samples, Scalar ht, Scalar nu) {
  const std::size_t ns = samples.size();
  const Scalar ht_nu = ht * nu;
  const Scalar w = Scalar(1) / static_cast<Scalar>(ns - 2);
  StepLossParts<Scalar> parts;
  for (std::size_t i = 1; i + 1 < ns; ++i) {
    const Jet<Scalar> u = forward_jet(k_net, samples.x[i]);
    Scalar r = -km1_values[i];
    r += u.v;
    r += (-ht_nu) * u.d2;
    r += ht * (u.v * u.d1);
    parts.residual += w * (r * r);
  }
  const Scalar u0v = forward_value(k_net, samples.x.front());
  const Scalar u1v = forward_value(k_net, samples.x.back());
  parts.boundary = Scalar(0.5) * (u0v * u0v) + Scalar(0.5) * (u1v * u1v);
  parts.total = parts.residual + parts.boundary;
  return parts;
}

template <class Scalar>
Scalar step_loss(const MlpParams<Scalar>& k_net, const MlpParams<Scalar>& km1_net,
                 const SampleSet<Scalar>& samples, Scalar ht, Scalar nu) {
  std::vector<Scalar> prev(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    prev[i] = forward_value(km1_net, samples.x[i]);
  return step_loss_parts(k_net, std::span<const Scalar>(prev), samples, ht, nu).total;
}

/// Sampled loss functor for initial-condition training.
template <class Scalar>
class InitialLossFn {
 public:
  template <class U0>
  InitialLossFn(const SampleSet<Scalar>& samples, U0&& u0)
      : samples_(samples), tape_(std::span<const Scalar>{}) {
    samples_.validate();
    targets_.resize(samples_.size());
    for (std::size_t i = 0; i < samples_.size(); ++i)
      targets_[i] = static_cast<Scalar>(u0(samples_.x[i]));
  }

  std::size_t sample_count() const { return samples_.size(); }

  Scalar operator()(const MlpParams<Scalar>& p, std::span<const std::size_t> idx, Scalar* grad) {
    tape_.reset();
    tape_.rebind(p.values());
    terms_.clear();
    const Scalar w = Scalar(1) / static_cast<Scalar>(idx.size());
    for (const std::size_t i : idx) {
      const JetRef u = forward_jet(tape_, p, samples_.x[i]);
      std::pair<ScalarRef, Scalar> t{tape_.part(u, JetPart::value), Scalar(1)};
      const ScalarRef diff = tape_.linear(std::span(&t, 1), -targets_[i]);
      terms_.push_back({tape_.square(diff), w});
    }
    const ScalarRef loss = tape_.linear(std::span<const std::pair<ScalarRef, Scalar>>(terms_));
    if (grad) tape_.backward(Scalar(1), std::span<Scalar>(grad, p.size()));
    return tape_.value(loss);
  }

 private:
  SampleSet<Scalar> samples_;
  std::vector<Scalar> targets_;
  Tape<Scalar> tape_;
  std::vector<std::pair<ScalarRef, Scalar>> terms_;
};

/// Sampled loss functor for one implicit-Euler step. Sample indices range
/// over the n_s - 2 interior points; the boundary penalty is always
/// included. The previous network is frozen: its values are precomputed.
template <class Scalar>
class StepLossFn {
 public:
  StepLossFn(const SampleSet<Scalar>& samples, const MlpParams<Scalar>& km1_net, Scalar ht,
             Scalar nu)
      : samples_(samples), ht_(ht), ht_nu_(ht * nu), tape_(std::span<const Scalar>{}) {
    samples_.validate();
    prev_.resize(samples_.size());
    for (std::size_t i = 0; i < samples_.size(); ++i)
      prev_[i] = forward_value(km1_net, samples_.x[i]);
  }

  std::size_t sample_count() const { return samples_.interior_count(); }
  std::span<const Scalar> previous_values() const { return prev_; }

  Scalar operator()(const MlpParams<Scalar>& p, std::span<const std::size_t> idx, Scalar* grad) {
    tape_.reset();
    tape_.rebind(p.values());
    terms_.clear();
    const Scalar w = Scalar(1) / static_cast<Scalar>(idx.size());
    for (const std::size_t ii : idx) {
      const std::size_t i = ii + 1;  // interior sample
      const JetRef u = forward_jet(tape_, p, samples_.x[i]);
      const ScalarRef uv = tape_.part(u, JetPart::value);
      const ScalarRef ud1 = tape_.part(u, JetPart::dx);
      const ScalarRef ud2 = tape_.part(u, JetPart::dxx);
      const ScalarRef adv = tape_.mul(uv, ud1);
      const std::pair<ScalarRef, Scalar> rterms[3] = {
          {uv, Scalar(1)}, {ud2, -ht_nu_}, {adv, ht_}};
      const ScalarRef r = tape_.linear(std::span(rterms, 3), -prev_[i]);
      terms_.push_back({tape_.square(r), w});
    }
    const ScalarRef res_part = tape_.linear(std::span<const std::pair<ScalarRef, Scalar>>(terms_));

    const JetRef ub0 = forward_jet(tape_, p, samples_.x.front());
    const JetRef ub1 = forward_jet(tape_, p, samples_.x.back());
    const std::pair<ScalarRef, Scalar> bterms[2] = {
        {tape_.square(tape_.part(ub0, JetPart::value)), Scalar(0.5)},
        {tape_.square(tape_.part(ub1, JetPart::value)), Scalar(0.5)}};
    const ScalarRef bd_part = tape_.linear(std::span(bterms, 2));

    const std::pair<ScalarRef, Scalar> tot[2] = {{res_part, Scalar(1)}, {bd_part, Scalar(1)}};
    const ScalarRef loss = tape_.linear(std::span(tot, 2));
    if (grad) tape_.backward(Scalar(1), std::span<Scalar>(grad, p.size()));
    return tape_.value(loss);
  }

 private:
  SampleSet<Scalar> samples_;
  std::vector<Scalar> prev_;
  Scalar ht_, ht_nu_;
  Tape<Scalar> tape_;
  std::vector<std::pair<ScalarRef, Scalar>> terms_;
};

// ---- solve ------------------------------------------------------------------

template <class Scalar>
struct SolveHooks {
  /// Reference solution u(t, x) for per-step relative errors.
  std::function<double(double, double)> oracle{};
  std::size_t error_grid_points = 1001;
  /// When set, restricts error evaluation to steps where it returns true.
  std::function<bool(std::size_t)> error_at{};
  /// Called after each completed step (including k = 0).
  std::function<void(const TimeStepRecord&, const MlpParams<Scalar>&)> on_step{};
};

template <class Scalar>
struct SolveResult {
  std::vector<TimeStepRecord> records;
  /// Network of the last completed step; empty only when the initial
  /// training aborted.
  std::optional<MlpParams<Scalar>> final_params;
  bool aborted = false;
  std::string abort_reason;
};

namespace detail {

inline double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

template <class Scalar>
std::optional<double> eval_rel_error(const MlpParams<Scalar>& net, double t,
                                     const SolveHooks<Scalar>& hooks,
                                     std::span<const double> grid) {
  if (!hooks.oracle) return std::nullopt;
  SolutionField ref;
  ref.x.assign(grid.begin(), grid.end());
  ref.u.resize(grid.size());
  double norm = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    ref.u[i] = hooks.oracle(t, grid[i]);
    norm += ref.u[i] * ref.u[i];
  }
  if (norm == 0.0) return std::nullopt;  // degenerate reference, skip
  return rel_error(sample_network(net, grid), ref);
}

}  // namespace detail

/// Train the step-0 network against the initial condition.
template <class Scalar, class U0>
std::pair<MlpParams<Scalar>, TimeStepRecord> train_initial(const SolverConfig<Scalar>& cfg,
                                                           U0&& u0) {
  cfg.arch.validate();
  const SampleSet<Scalar> samples = SampleSet<Scalar>::uniform(cfg.ns);
  MlpParams<Scalar> net = MlpParams<Scalar>::init(cfg.arch, cfg.seed);
  InitialLossFn<Scalar> loss(samples, u0);
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = train(net, loss.sample_count(), loss, cfg.train);
  TimeStepRecord rec{0, 0.0, r.epochs, r.final_loss, std::nullopt, detail::elapsed_ms(t0),
                     r.converged};
  return {std::move(net), rec};
}

/// Transfer the previous network and train it on the implicit-Euler loss
/// for step k.
template <class Scalar>
std::pair<MlpParams<Scalar>, TimeStepRecord> train_step(const SolverConfig<Scalar>& cfg,
                                                        const MlpParams<Scalar>& km1_net,
                                                        std::size_t k) {
  const SampleSet<Scalar> samples = SampleSet<Scalar>::uniform(cfg.ns);
  MlpParams<Scalar> net = transfer(km1_net);
  StepLossFn<Scalar> loss(samples, km1_net, cfg.ht, cfg.nu);
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = train(net, loss.sample_count(), loss, cfg.train);
  const double t = static_cast<double>(static_cast<Scalar>(k) * cfg.ht);
  TimeStepRecord rec{k, t, r.epochs, r.final_loss, std::nullopt, detail::elapsed_ms(t0),
                     r.converged};
  return {std::move(net), rec};
}

/// The full iteration: train N^(0) on the initial loss, then for each
/// step transfer knowledge and train on the implicit-Euler loss. Only two
/// networks are retained at any moment. A training abort (non-finite
/// loss/gradient) halts the solve and returns the records accumulated so
/// far with the failure reason.
template <class Scalar, class U0>
SolveResult<Scalar> solve(const SolverConfig<Scalar>& cfg, U0&& u0,
                          const SolveHooks<Scalar>& hooks = {}) {
  cfg.validate();
  SolveResult<Scalar> result;
  std::vector<double> grid;
  if (hooks.oracle) grid = uniform_grid(hooks.error_grid_points);
  const auto want_error = [&](std::size_t k) {
    return hooks.oracle && (!hooks.error_at || hooks.error_at(k));
  };

  const SampleSet<Scalar> samples = SampleSet<Scalar>::uniform(cfg.ns);

  // Exactly two networks live across the iteration: the previous and the
  // current time level.
  MlpParams<Scalar> prev;
  MlpParams<Scalar> cur = MlpParams<Scalar>::init(cfg.arch, cfg.seed);
  {
    InitialLossFn<Scalar> loss(samples, u0);
    const auto t0 = std::chrono::steady_clock::now();
    TimeStepRecord rec{};
    try {
      const TrainResult r = train(cur, loss.sample_count(), loss, cfg.train);
      rec = {0, 0.0, r.epochs, r.final_loss, std::nullopt, detail::elapsed_ms(t0), r.converged};
    } catch (const TrainingError& e) {
      result.aborted = true;
      result.abort_reason = std::string("initial training aborted: ") + e.what();
      return result;
    }
    if (want_error(0)) rec.rel_error = detail::eval_rel_error(cur, 0.0, hooks, grid);
    result.records.push_back(rec);
    if (hooks.on_step) hooks.on_step(rec, cur);
  }

  for (std::size_t k = 1; k <= cfg.nt; ++k) {
    prev = std::move(cur);
    cur = transfer(prev);
    StepLossFn<Scalar> loss(samples, prev, cfg.ht, cfg.nu);
    const auto t0 = std::chrono::steady_clock::now();
    TimeStepRecord rec{};
    try {
      const TrainResult r = train(cur, loss.sample_count(), loss, cfg.train);
      const double t = static_cast<double>(static_cast<Scalar>(k) * cfg.ht);
      rec = {k, t, r.epochs, r.final_loss, std::nullopt, detail::elapsed_ms(t0), r.converged};
    } catch (const TrainingError& e) {
      result.aborted = true;
      result.abort_reason = "step " + std::to_string(k) + " training aborted: " + e.what();
      result.final_params = std::move(prev);
      return result;
    }
    if (want_error(k)) rec.rel_error = detail::eval_rel_error(cur, rec.t, hooks, grid);
    result.records.push_back(rec);
    if (hooks.on_step) hooks.on_step(rec, cur);
  }
  result.final_params = std::move(cur);
  return result;
}

}  // namespace bpinn
