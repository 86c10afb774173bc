#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "lifeline/approximator.hpp"
#include "lifeline/optimizer.hpp"

using namespace lifeline;

namespace {

// Independent evaluation: explicit weight matrices, tanh hidden, linear out.
Vector reference_forward(const std::vector<std::size_t>& widths, const ParameterVector& theta, Vector x) {
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t n = widths[l];
    const std::size_t m = widths[l + 1];
    std::vector<std::vector<double>> W(m, std::vector<double>(n));
    for (std::size_t o = 0; o < m; ++o)
      for (std::size_t i = 0; i < n; ++i) W[o][i] = theta[off + o * n + i];
    Vector y(m);
    for (std::size_t o = 0; o < m; ++o) {
      double z = theta[off + n * m + o];
      for (std::size_t i = 0; i < n; ++i) z += W[o][i] * x[i];
      y[o] = l + 2 < widths.size() ? std::tanh(z) : z;
    }
    off += n * m + m;
    x = y;
  }
  return x;
}

}  // namespace

TEST(Mlp, ZeroParametersGiveZeroOutput) {
  Mlp net({3, 4, 2});
  EXPECT_EQ(net.forward(std::vector<double>{1.0, -2.0, 3.0}), (Vector{0.0, 0.0}));
}

TEST(Mlp, IdentityLayerReproducesInput) {
  Mlp net({3, 3});
  for (std::size_t i = 0; i < 3; ++i) net.params()[i * 3 + i] = 1.0;
  const Vector x{0.3, -1.7, 2.5};
  EXPECT_EQ(net.forward(x), x);
}

TEST(Mlp, MatchesHandRolledMatrixEvaluation) {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    Mlp net = Mlp::random({2, 3, 1}, rng);
    for (double& p : net.params()) p = rng.normal();
    const Vector x{rng.normal(), rng.normal()};
    EXPECT_NEAR(net.forward(x)[0], reference_forward({2, 3, 1}, net.params(), x)[0], 1e-13);
  }
  Mlp deep = Mlp::random({4, 5, 6, 3}, rng);
  const Vector x{0.1, 0.2, -0.3, 0.4};
  const Vector got = deep.forward(x);
  const Vector want = reference_forward({4, 5, 6, 3}, deep.params(), x);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(got[k], want[k], 1e-13);
}

TEST(Mlp, WrongInputWidthIsContractViolation) {
  Mlp net({3, 2});
  EXPECT_THROW(net.forward(std::vector<double>{1.0}), ContractViolation);
}

TEST(Mlp, ParameterCountAndInitBounds) {
  Rng rng(1);
  Mlp net = Mlp::random({4, 8, 1}, rng);
  EXPECT_EQ(net.param_count(), 4u * 8 + 8 + 8 + 1);
  for (std::size_t k = 0; k < 32; ++k) EXPECT_LE(std::abs(net.params()[k]), 0.5);
  for (std::size_t k = 32; k < 40; ++k) EXPECT_EQ(net.params()[k], 0.0);
}

TEST(Mlp, BackwardMatchesFiniteDifferences) {
  Rng rng(5);
  Mlp net = Mlp::random({3, 4, 4, 2}, rng);
  const Vector x{0.5, -0.2, 0.9};
  const Vector w{1.3, -0.7};  // loss = w . f(x)
  ParameterVector grad(net.param_count(), 0.0);
  MlpShape::Cache cache;
  net.forward(x, cache);
  net.backward(cache, w, grad);
  Mlp probe = net;
  const auto f = [&](std::span<const double> th) {
    std::copy(th.begin(), th.end(), probe.params().begin());
    const Vector y = probe.forward(x);
    return w[0] * y[0] + w[1] * y[1];
  };
  EXPECT_TRUE(grad_check(f, grad, net.params(), 1e-5, 1e-6).passed);
}

TEST(GaussianPolicy, HandComputedScore) {
  GaussianPolicy pi({1, 1}, 0.0);  // mu = w*s + b, all zero; sigma = 1
  const LogProbGrad g = log_prob_and_grad(pi, std::vector<double>{1.0}, std::vector<double>{1.0});
  EXPECT_DOUBLE_EQ(g.grad[0], 1.0);                  // d/dw
  EXPECT_DOUBLE_EQ(g.log_prob, -0.5 - kHalfLog2Pi);  // N(1; 0, 1)
}

TEST(GaussianPolicy, ScoreVanishesAtTheMean) {
  Rng rng(8);
  GaussianPolicy pi = GaussianPolicy::random({2, 5, 2}, rng);
  const Vector s{0.4, -0.1};
  const LogProbGrad g = log_prob_and_grad(pi, s, pi.mean(s));
  for (std::size_t k = 0; k < pi.mean_param_count(); ++k) EXPECT_EQ(g.grad[k], 0.0);
  for (std::size_t d = 0; d < 2; ++d) EXPECT_DOUBLE_EQ(g.grad[pi.mean_param_count() + d], -1.0);
}

TEST(GaussianPolicy, LogProbMatchesClosedForm) {
  Rng rng(3);
  GaussianPolicy pi = GaussianPolicy::random({2, 4, 2}, rng, std::log(0.7));
  pi.log_std()[1] = std::log(1.3);
  const Vector s{0.2, 0.8};
  const Vector a{0.5, -1.0};
  const Vector mu = pi.mean(s);
  double want = 0.0;
  const double sig[2] = {0.7, 1.3};
  for (int d = 0; d < 2; ++d) {
    want += -std::log(sig[d] * std::sqrt(2 * M_PI)) - (a[d] - mu[d]) * (a[d] - mu[d]) / (2 * sig[d] * sig[d]);
  }
  EXPECT_NEAR(pi.log_prob(s, a), want, 1e-13);
}

TEST(GaussianPolicy, GradientPassesFiniteDifferenceCheck) {
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    GaussianPolicy pi = GaussianPolicy::random({3, 6, 2}, rng, -0.4);
    const Vector s{rng.normal(), rng.normal(), rng.normal()};
    const Vector a{rng.normal(), rng.normal()};
    const LogProbGrad g = log_prob_and_grad(pi, s, a);
    GaussianPolicy probe = pi;
    const auto f = [&](std::span<const double> th) {
      std::copy(th.begin(), th.end(), probe.params().begin());
      return probe.log_prob(s, a);
    };
    const GradCheckReport rep = grad_check(f, g.grad, pi.params(), 1e-5, 1e-4);
    EXPECT_TRUE(rep.passed) << rep.max_relative_error;
  }
}

TEST(GaussianPolicy, SamplesHaveRequestedMoments) {
  Rng rng(6);
  GaussianPolicy pi = GaussianPolicy::random({1, 3, 1}, rng, std::log(0.4));
  const Vector s{0.5};
  const double mu = pi.mean(s)[0];
  const int n = 100000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const auto smp = pi.sample(s, rng);
    ASSERT_NEAR(smp.log_prob, pi.log_prob(s, smp.action), 1e-12);
    sum += smp.action[0];
    sq += (smp.action[0] - mu) * (smp.action[0] - mu);
  }
  EXPECT_NEAR(sum / n, mu, 5 * 0.4 / std::sqrt(n));
  EXPECT_NEAR(std::sqrt(sq / n), 0.4, 0.01);
}

TEST(GaussianPolicy, EntropyClosedForm) {
  GaussianPolicy pi({1, 1}, 0.0);
  EXPECT_NEAR(pi.entropy(), 0.5 * std::log(2 * M_PI * M_E), 1e-14);
  const double h1 = pi.entropy();
  pi.log_std()[0] = std::log(2.0);
  EXPECT_NEAR(pi.entropy() - h1, std::log(2.0), 1e-14);
}

TEST(GaussianPolicy, NonFiniteStdIsNumericError) {
  GaussianPolicy pi({1, 1}, 0.0);
  pi.log_std()[0] = 1e6;
  EXPECT_THROW((void)pi.log_prob(std::vector<double>{0.0}, std::vector<double>{0.0}), NumericError);
}

TEST(GradCheck, QuadraticPassesTightly) {
  const ParameterVector theta{0.3, -1.2, 2.0, 5.5};
  const auto f = [](std::span<const double> th) {
    double s = 0;
    for (const double v : th) s += 0.5 * v * v;
    return s;
  };
  EXPECT_TRUE(grad_check(f, theta, theta, 1e-5, 1e-6).passed);
}

TEST(GradCheck, ScaledGradientFails) {
  const ParameterVector theta{0.3, -1.2, 2.0, 5.5};
  ParameterVector wrong = theta;
  for (double& g : wrong) g *= 1.01;
  const auto f = [](std::span<const double> th) {
    double s = 0;
    for (const double v : th) s += 0.5 * v * v;
    return s;
  };
  const GradCheckReport rep = grad_check(f, wrong, theta, 1e-5, 1e-3);
  EXPECT_FALSE(rep.passed);
  EXPECT_NEAR(rep.max_relative_error, 0.01 / 1.01, 1e-6);
}

TEST(Checkpoint, RoundTripsTo17Digits) {
  Rng rng(77);
  GaussianPolicy pi = GaussianPolicy::random({3, 7, 2}, rng, -0.3);
  for (double& p : pi.params()) p = rng.normal() * 1e3 + 1e-7 * rng.normal();
  std::stringstream io;
  write_checkpoint(io, pi.shape().widths(), pi.params());
  const Checkpoint ck = read_checkpoint(io);
  EXPECT_EQ(ck.layer_widths, pi.shape().widths());
  ASSERT_EQ(ck.params.size(), pi.param_count());
  for (std::size_t k = 0; k < ck.params.size(); ++k) EXPECT_EQ(ck.params[k], pi.params()[k]);
}

TEST(Checkpoint, RejectsBadFiles) {
  std::istringstream no_header("layer_widths: 1 1\n0\n0\n");
  EXPECT_THROW(read_checkpoint(no_header), ConfigError);
  std::istringstream wrong_count("lifeline-ckpt v1\nlayer_widths: 2 1\n0\n");
  EXPECT_THROW(read_checkpoint(wrong_count), ConfigError);
  std::istringstream junk("lifeline-ckpt v1\nlayer_widths: 1 1\n0\nabc\n");
  EXPECT_THROW(read_checkpoint(junk), ConfigError);
}

TEST(Adam, FirstStepHasLearningRateMagnitude) {
  Adam opt(3, 0.1);
  ParameterVector p{1.0, 2.0, 3.0};
  opt.step(p, std::vector<double>{4.0, -0.001, 0.0});
  EXPECT_NEAR(p[0], 0.9, 1e-9);
  EXPECT_NEAR(p[1], 2.1, 1e-5);
  EXPECT_EQ(p[2], 3.0);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, MinimisesAQuadratic) {
  Adam opt(2, 0.05);
  ParameterVector p{3.0, -2.0};
  for (int i = 0; i < 2000; ++i) opt.step(p, std::vector<double>{2 * p[0], 2 * p[1]});
  EXPECT_NEAR(p[0], 0.0, 1e-3);
  EXPECT_NEAR(p[1], 0.0, 1e-3);
}
