#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bpinn/errors.hpp"
#include "bpinn/network.hpp"

namespace bpinn {

struct AdamSettings {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
///   theta <- theta - alpha * m_hat / (sqrt(v_hat) + eps).
template <class Scalar>
class Adam {
 public:
  explicit Adam(std::size_t n, const AdamSettings& cfg = {})
      : alpha_(static_cast<Scalar>(cfg.learning_rate)),
        beta1_(static_cast<Scalar>(cfg.beta1)),
        beta2_(static_cast<Scalar>(cfg.beta2)),
        eps_(static_cast<Scalar>(cfg.epsilon)),
        m_(n, Scalar(0)),
        v_(n, Scalar(0)) {}

  void step(std::span<Scalar> params, std::span<const Scalar> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size())
      throw UsageError("adam: parameter/gradient size mismatch");
    ++tau_;
    beta1_t_ *= beta1_;
    beta2_t_ *= beta2_;
    const Scalar bc1 = Scalar(1) - beta1_t_;
    const Scalar bc2 = Scalar(1) - beta2_t_;
    for (std::size_t i = 0; i < m_.size(); ++i) {
      const Scalar g = grad[i];
      if (!std::isfinite(g))
        throw TrainingError("adam: non-finite gradient at parameter index " + std::to_string(i),
                            0, static_cast<std::ptrdiff_t>(i));
      m_[i] = beta1_ * m_[i] + (Scalar(1) - beta1_) * g;
      v_[i] = beta2_ * v_[i] + (Scalar(1) - beta2_) * g * g;
      const Scalar m_hat = m_[i] / bc1;
      const Scalar v_hat = v_[i] / bc2;
      params[i] -= alpha_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }

  std::uint64_t step_count() const { return tau_; }

  void reset() {
    std::fill(m_.begin(), m_.end(), Scalar(0));
    std::fill(v_.begin(), v_.end(), Scalar(0));
    tau_ = 0;
    beta1_t_ = Scalar(1);
    beta2_t_ = Scalar(1);
  }

 private:
  Scalar alpha_, beta1_, beta2_, eps_;
  Scalar beta1_t_{1}, beta2_t_{1};
  std::vector<Scalar> m_, v_;
  std::uint64_t tau_ = 0;
};

struct TrainSettings {
  std::size_t batch_size = 0;  // 0 = full batch
  std::size_t max_epochs = 50000;
  double tolerance = 1e-6;
  std::size_t loss_check_cadence = 1;  // epochs between stop checks
  std::uint64_t shuffle_seed = 0;
  AdamSettings adam{};

  void validate(std::size_t n_samples) const {
    if (tolerance <= 0) throw ConfigError("train: tolerance must be positive");
    if (loss_check_cadence < 1) throw ConfigError("train: cadence must be at least 1");
    if (batch_size > n_samples)
      throw ConfigError("train: batch size " + std::to_string(batch_size) +
                        " exceeds sample count " + std::to_string(n_samples));
  }
};

struct TrainResult {
  std::size_t epochs = 0;
  double final_loss = 0.0;
  bool converged = false;
};

/// Mini-batch gradient descent with loss-threshold stopping. loss_fn must
/// be callable as loss_fn(params, indices, grad_ptr) where indices selects
/// a subset of the n_samples-element sample set and grad_ptr is nullptr or
/// a parameter-aligned buffer to fill. Stops at the first epoch whose
/// full-sample loss drops below tolerance, or at max_epochs; the reported
/// loss is always the full-sample loss.
template <class Scalar, class LossFn>
TrainResult train(MlpParams<Scalar>& params, std::size_t n_samples, LossFn&& loss_fn,
                  const TrainSettings& ts) {
  ts.validate(n_samples);
  const std::size_t batch = ts.batch_size == 0 ? n_samples : ts.batch_size;
  const bool full_batch = batch == n_samples;

  std::vector<std::size_t> all(n_samples);
  std::iota(all.begin(), all.end(), std::size_t(0));
  std::vector<std::size_t> order = all;
  std::vector<Scalar> grad(params.size());
  std::mt19937_64 shuffle_rng(ts.shuffle_seed);
  Adam<Scalar> adam(params.size(), ts.adam);

  auto check_finite = [](Scalar loss, std::size_t epoch) {
    if (!std::isfinite(loss))
      throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch), epoch);
  };

  const auto check_epoch = [&](std::size_t epoch) {
    return epoch % ts.loss_check_cadence == 0 || epoch == ts.max_epochs;
  };

  for (std::size_t epoch = 0;; ++epoch) {
    if (full_batch) {
      // One evaluation serves both the stop check and the epoch's update.
      const Scalar loss =
          loss_fn(params, std::span<const std::size_t>(all), grad.data());
      check_finite(loss, epoch);
      if (check_epoch(epoch) && static_cast<double>(loss) < ts.tolerance)
        return {epoch, static_cast<double>(loss), true};
      if (epoch == ts.max_epochs) return {epoch, static_cast<double>(loss), false};
      try {
        adam.step(params.values(), grad);
      } catch (TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ")",
                            epoch, e.parameter_index);
      }
    } else {
      if (check_epoch(epoch)) {
        const Scalar loss = loss_fn(params, std::span<const std::size_t>(all),
                                    static_cast<Scalar*>(nullptr));
        check_finite(loss, epoch);
        if (static_cast<double>(loss) < ts.tolerance)
          return {epoch, static_cast<double>(loss), true};
        if (epoch == ts.max_epochs) return {epoch, static_cast<double>(loss), false};
      }
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      for (std::size_t b = 0; b < n_samples; b += batch) {
        const std::size_t e = std::min(b + batch, n_samples);
        const Scalar bloss = loss_fn(
            params, std::span<const std::size_t>(order.data() + b, e - b), grad.data());
        check_finite(bloss, epoch);
        try {
          adam.step(params.values(), grad);
        } catch (TrainingError& err) {
          throw TrainingError(std::string(err.what()) + " (epoch " + std::to_string(epoch) + ")",
                              epoch, err.parameter_index);
        }
      }
    }
  }
}

}  // namespace bpinn
