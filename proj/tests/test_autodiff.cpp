#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "bpinn/network.hpp"
#include "bpinn/solver.hpp"
#include "bpinn/tape.hpp"
#include "support/finite_difference.hpp"

using namespace bpinn;

namespace {

std::vector<Jet<double>> quad_path_jets(const std::vector<Jet<double>>& jets, double s) {
  // Realize each jet as the quadratic g(s) = v + d1 s + d2 s^2 / 2, whose
  // jet at s = 0 is exactly (v, d1, d2).
  std::vector<Jet<double>> out;
  for (const auto& j : jets)
    out.push_back(Jet<double>::constant(j.v + j.d1 * s + 0.5 * j.d2 * s * s));
  return out;
}

}  // namespace

TEST_SUITE("autodiff.jet_affine") {
  TEST_CASE("identity map leaves seed jets unchanged") {
    // W = I3, b = 0
    std::vector<double> params(12, 0.0);
    params[0] = params[4] = params[8] = 1.0;
    Tape<double> tape{std::span<const double>(params)};
    const std::vector<Jet<double>> in{{0.3, 1, 0}, {-1.2, 1, 0}, {7.5, 1, 0}};
    const JetRef out = tape.affine(0, 9, 3, 3, tape.jet_input(in));
    for (std::uint32_t i = 0; i < 3; ++i) {
      const Jet<double> j = tape.jet(out, i);
      CHECK(j.v == in[i].v);
      CHECK(j.d1 == 1.0);
      CHECK(j.d2 == 0.0);
    }
  }

  TEST_CASE("scalar affine rule") {
    // W = [[2]], b = [3], jet (1,1,0) -> (5,2,0)
    const std::vector<double> params{2.0, 3.0};
    Tape<double> tape{std::span<const double>(params)};
    const Jet<double> in{1, 1, 0};
    const JetRef out = tape.affine(0, 1, 1, 1, tape.jet_input(std::span(&in, 1)));
    const Jet<double> j = tape.jet(out);
    CHECK(j.v == 5.0);
    CHECK(j.d1 == 2.0);
    CHECK(j.d2 == 0.0);
  }

  TEST_CASE("random 3x3 map against finite differences along x") {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> params(12);
      for (double& p : params) p = dist(rng);
      std::vector<Jet<double>> in(3);
      for (auto& j : in) j = {dist(rng), dist(rng), dist(rng)};

      Tape<double> tape{std::span<const double>(params)};
      const JetRef out = tape.affine(0, 9, 3, 3, tape.jet_input(in));

      const auto map_output = [&](std::uint32_t unit, double s) {
        Tape<double> t2{std::span<const double>(params)};
        const auto moved = quad_path_jets(in, s);
        return t2.jet(t2.affine(0, 9, 3, 3, t2.jet_input(moved)), unit).v;
      };
      for (std::uint32_t i = 0; i < 3; ++i) {
        const Jet<double> j = tape.jet(out, i);
        const auto f = [&](double s) { return map_output(i, s); };
        CHECK(fdcheck::rel_diff(j.d1, fdcheck::central_d1(f, 0.0, 1e-6)) < 1e-6);
        CHECK(fdcheck::rel_diff(j.d2, fdcheck::central_d2(f, 0.0, 1e-4)) < 1e-6);
      }
    }
  }

  TEST_CASE("dimension mismatch is a configuration error") {
    const std::vector<double> params{1.0, 0.0};
    Tape<double> tape{std::span<const double>(params)};
    const Jet<double> in{1, 1, 0};
    const JetRef j = tape.jet_input(std::span(&in, 1));
    CHECK_THROWS_AS(tape.affine(0, 1, 2, 1, j), ConfigError);
  }

  TEST_CASE("affine stages are linear in the jets") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    std::vector<double> params(12);
    for (double& p : params) p = dist(rng);
    const double alpha = dist(rng), beta = dist(rng);
    std::vector<Jet<double>> u(3), v(3), mix(3);
    for (int i = 0; i < 3; ++i) {
      u[i] = {dist(rng), dist(rng), dist(rng)};
      v[i] = {dist(rng), dist(rng), dist(rng)};
      mix[i] = alpha * u[i] + beta * v[i];
    }
    // Linear stage without bias so homogeneity holds exactly.
    std::vector<double> params_nb = params;
    params_nb[9] = params_nb[10] = params_nb[11] = 0.0;
    Tape<double> t{std::span<const double>(params_nb)};
    const JetRef au = t.affine(0, 9, 3, 3, t.jet_input(u));
    const JetRef av = t.affine(0, 9, 3, 3, t.jet_input(v));
    const JetRef am = t.affine(0, 9, 3, 3, t.jet_input(mix));
    for (std::uint32_t i = 0; i < 3; ++i) {
      const Jet<double> expect = alpha * t.jet(au, i) + beta * t.jet(av, i);
      const Jet<double> got = t.jet(am, i);
      CHECK(fdcheck::rel_diff(got.v, expect.v, 1e-12) < 1e-12);
      CHECK(fdcheck::rel_diff(got.d1, expect.d1, 1e-12) < 1e-12);
      CHECK(fdcheck::rel_diff(got.d2, expect.d2, 1e-12) < 1e-12);
    }
  }
}

TEST_SUITE("autodiff.jet_tanh") {
  TEST_CASE("odd function at the origin") {
    Tape<double> tape{std::span<const double>{}};
    const Jet<double> in{0, 1, 0};
    const Jet<double> j = tape.jet(tape.tanh(tape.jet_input(std::span(&in, 1))));
    CHECK(j.v == 0.0);
    CHECK(j.d1 == 1.0);
    CHECK(j.d2 == 0.0);
  }

  TEST_CASE("constant input stays constant") {
    Tape<double> tape{std::span<const double>{}};
    const Jet<double> in{0.73, 0, 0};
    const Jet<double> j = tape.jet(tape.tanh(tape.jet_input(std::span(&in, 1))));
    CHECK(j.v == std::tanh(0.73));
    CHECK(j.d1 == 0.0);
    CHECK(j.d2 == 0.0);
  }

  TEST_CASE("chain rule against finite differences along a path") {
    const Jet<double> in{0.5, 2.0, 1.0};
    Tape<double> tape{std::span<const double>{}};
    const Jet<double> j = tape.jet(tape.tanh(tape.jet_input(std::span(&in, 1))));
    const auto f = [&](double s) { return std::tanh(in.v + in.d1 * s + 0.5 * in.d2 * s * s); };
    CHECK(fdcheck::rel_diff(j.d1, fdcheck::central_d1(f, 0.0, 1e-6)) < 1e-6);
    CHECK(fdcheck::rel_diff(j.d2, fdcheck::central_d2(f, 0.0, 1e-4)) < 1e-6);
  }
}

TEST_SUITE("autodiff.backward") {
  TEST_CASE("closed-form gradient of one-layer linear regression") {
    const double x = 1.7, y = -0.4;
    const std::vector<double> params{0.9, 0.2};  // w, b
    Tape<double> tape{std::span<const double>(params)};
    const ScalarRef v = tape.part(tape.affine(0, 1, 1, 1, tape.input(x)), JetPart::value);
    const std::pair<ScalarRef, double> term{v, 1.0};
    const ScalarRef diff = tape.linear(std::span(&term, 1), -y);
    tape.square(diff);
    const std::vector<double> grad = tape.backward(1.0);
    const double d = params[0] * x + params[1] - y;
    CHECK(grad[0] == 2.0 * d * x);
    CHECK(grad[1] == 2.0 * d);
  }

  TEST_CASE("zero loss-adjoint gives a zero gradient") {
    const std::vector<double> params{0.5, -0.5};
    Tape<double> tape{std::span<const double>(params)};
    tape.square(tape.part(tape.affine(0, 1, 1, 1, tape.input(0.3)), JetPart::value));
    for (const double g : tape.backward(0.0)) CHECK(g == 0.0);
  }

  TEST_CASE("backward before any forward is a usage error") {
    Tape<double> tape{std::span<const double>{}};
    CHECK_THROWS_AS(tape.backward(1.0), UsageError);
  }

  TEST_CASE("identical forward passes give bit-identical gradients") {
    const auto net = MlpParams<double>::init({2, 8}, 99);
    const SampleSet<double> samples = SampleSet<double>::uniform(11);
    StepLossFn<double> loss(samples, net, 1e-3, 1.0);
    std::vector<std::size_t> idx(samples.interior_count());
    std::iota(idx.begin(), idx.end(), std::size_t(0));
    std::vector<double> g1(net.size()), g2(net.size());
    auto copy = net;
    loss(copy, std::span<const std::size_t>(idx), g1.data());
    loss(copy, std::span<const std::size_t>(idx), g2.data());
    CHECK(g1 == g2);
  }

  TEST_CASE("step-loss gradient matches finite differences on a 1-10x2-1 network") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 5; ++trial) {
      const Architecture arch{2, 10};
      const auto prev = MlpParams<double>::init(arch, rng());
      auto net = MlpParams<double>::init(arch, rng());
      const SampleSet<double> samples = SampleSet<double>::uniform(9);
      const double ht = 1e-2, nu = 1.0;

      StepLossFn<double> loss(samples, prev, ht, nu);
      std::vector<std::size_t> idx(samples.interior_count());
      std::iota(idx.begin(), idx.end(), std::size_t(0));
      std::vector<double> analytic(net.size());
      const double lval = loss(net, std::span<const std::size_t>(idx), analytic.data());

      const auto loss_at = [&](const std::vector<double>& theta) {
        auto probe = net;
        std::copy(theta.begin(), theta.end(), probe.values().begin());
        return double(step_loss(probe, prev, samples, ht, nu));
      };
      const std::vector<double> theta(net.values().begin(), net.values().end());
      const std::vector<double> numeric = fdcheck::gradient(loss_at, theta, 1e-6);
      CHECK(fdcheck::max_rel_mismatch(analytic, numeric, 1e-5 * std::max(1.0, lval)) < 1e-4);
    }
  }

  TEST_CASE("initial-loss gradient matches finite differences") {
    std::mt19937_64 rng(11);
    const Architecture arch{2, 10};
    auto net = MlpParams<double>::init(arch, rng());
    const SampleSet<double> samples = SampleSet<double>::uniform(9);
    const auto u0 = [](double x) { return std::sin(3.0 * x); };

    InitialLossFn<double> loss(samples, u0);
    std::vector<std::size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), std::size_t(0));
    std::vector<double> analytic(net.size());
    const double lval = loss(net, std::span<const std::size_t>(idx), analytic.data());

    const auto loss_at = [&](const std::vector<double>& theta) {
      auto probe = net;
      std::copy(theta.begin(), theta.end(), probe.values().begin());
      return double(initial_loss(probe, samples, u0));
    };
    const std::vector<double> theta(net.values().begin(), net.values().end());
    CHECK(fdcheck::max_rel_mismatch(analytic, fdcheck::gradient(loss_at, theta, 1e-6),
                                    1e-5 * std::max(1.0, lval)) < 1e-4);
  }
}
