#include <catch_amalgamated.hpp>

#include <random>

#include "delayguard/functionals.hpp"

using namespace delayguard;
using Catch::Approx;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> xs)
{
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index k = 0;
  for (double x : xs) { v(k++) = x; }
  return v;
}

FunctionalBundle square_bundle()
{
  FunctionalBundle b;
  b.eval_v1 = [](const Eigen::VectorXd & x) { return x(0) * x(0); };
  b.grad_v1 = [](const Eigen::VectorXd & x) { return Eigen::RowVectorXd::Constant(1, 2.0 * x(0)); };
  b.eval_v2 = [](const HistoryBuffer &) { return 0.0; };
  b.dini_v2 = [](const HistoryBuffer &) { return 0.0; };
  return b;
}

// Central differences of eval_v1; returns the largest relative error against grad_v1.
double gradient_error(const FunctionalBundle & b, const Eigen::VectorXd & x)
{
  const Eigen::RowVectorXd g = b.grad_v1(x);
  double worst = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double step = 1e-6 * std::max(1.0, std::abs(x(k)));
    Eigen::VectorXd xp = x;
    Eigen::VectorXd xm = x;
    xp(k) += step;
    xm(k) -= step;
    const double fd = (b.eval_v1(xp) - b.eval_v1(xm)) / (2.0 * step);
    worst = std::max(worst, std::abs(fd - g(k)) / std::max(1.0, std::abs(g(k))));
  }
  return worst;
}

}  // namespace

TEST_CASE("lie data by hand chain rule")
{
  const auto b = square_bundle();
  const auto phi = HistoryBuffer::constant(1.0, vec({3.0}));
  const auto lie = lie_data(b, phi, vec({1.0}), Eigen::MatrixXd::Constant(1, 1, 2.0));
  CHECK(lie.lf_v1 == 6.0);
  CHECK(lie.lg_v1(0) == 12.0);
  CHECK(lie.dini_v2 == 0.0);
}

TEST_CASE("zero gradient gives zero lie data")
{
  FunctionalBundle b = square_bundle();
  b.grad_v1 = [](const Eigen::VectorXd &) { return Eigen::RowVectorXd::Zero(1); };
  b.dini_v2 = [](const HistoryBuffer &) { return 0.25; };
  const auto lie = lie_data(b, HistoryBuffer::constant(1.0, vec({3.0})), vec({1.0}), Eigen::MatrixXd::Ones(1, 1));
  CHECK(lie.lf_v1 == 0.0);
  CHECK(lie.lg_v1(0) == 0.0);
  CHECK(lie.dini_v2 == 0.25);
}

TEST_CASE("lie data rejects mismatched dimensions")
{
  const auto b = square_bundle();
  const auto phi = HistoryBuffer::constant(1.0, vec({3.0}));
  CHECK_THROWS_AS(lie_data(b, phi, vec({1.0, 2.0}), Eigen::MatrixXd::Ones(1, 1)), DomainError);
  CHECK_THROWS_AS(lie_data(b, phi, vec({1.0}), Eigen::MatrixXd::Ones(2, 1)), DomainError);
}

TEST_CASE("quadratic mclf examples")
{
  const Eigen::Matrix2d I = Eigen::Matrix2d::Identity();
  SECTION("at the target")
  {
    const auto v = quadratic_mclf(I, I, 0.1, vec({0.5, -1.0}));
    const auto phi = HistoryBuffer::constant(0.5, vec({0.5, -1.0, 0.3}));
    CHECK(v.eval_v1(phi.head()) == 0.0);
    CHECK(v.eval_v2(phi) == 0.0);
    CHECK(v.dini_v2(phi) == 0.0);
  }
  SECTION("constant history off target")
  {
    const auto v = quadratic_mclf(I, I, 0.1, vec({0.0, 0.0}));
    const auto phi = HistoryBuffer::constant(0.5, vec({1.0, 0.0}));
    CHECK(v.eval_v1(phi.head()) == Approx(1.0));
    CHECK(v.eval_v2(phi) == Approx(0.05).margin(1e-15));
    CHECK(v.dini_v2(phi) == 0.0);
    CHECK(v.value(phi) == Approx(1.05));
  }
  SECTION("linear history boundary terms")
  {
    const auto v = quadratic_mclf(I, I, 1.0, vec({0.0, 0.0}));
    const HistoryBuffer phi(0.5, {-0.5, 0.0}, {vec({0.0, 0.0}), vec({1.0, 0.0})}, Interpolation::linear);
    CHECK(v.dini_v2(phi) == Approx(1.0));
  }
  SECTION("V1 vanishes at the origin of the shifted state")
  {
    const Eigen::Matrix2d P = (Eigen::Matrix2d() << 2.0, 0.5, 0.5, 1.0).finished();
    const auto v = quadratic_mclf(P, I, 0.2, vec({1.0, 2.0}));
    CHECK(v.eval_v1(vec({1.0, 2.0, 5.0})) == 0.0);
  }
  SECTION("non-SPD weights are rejected")
  {
    const Eigen::Matrix2d bad = (Eigen::Matrix2d() << 1.0, 0.0, 0.0, -1.0).finished();
    CHECK_THROWS_AS(quadratic_mclf(bad, I, 0.1, vec({0.0, 0.0})), ConfigError);
    CHECK_THROWS_AS(quadratic_mclf(I, bad, 0.1, vec({0.0, 0.0})), ConfigError);
    CHECK_THROWS_AS(quadratic_mclf(I, I, 0.0, vec({0.0, 0.0})), ConfigError);
  }
}

TEST_CASE("quadratic mclf gradient matches finite differences")
{
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  const Eigen::Matrix2d P = (Eigen::Matrix2d() << 2.0, 0.5, 0.5, 1.0).finished();
  const auto v = quadratic_mclf(P, Eigen::Matrix2d::Identity(), 0.1, vec({0.3, -0.7}));
  for (int k = 0; k < 100; ++k) { CHECK(gradient_error(v, vec({u(rng), u(rng), u(rng)})) < 1e-5); }
}

TEST_CASE("quadratic mclf V2 matches the trapezoid rule on its samples")
{
  const auto v = quadratic_mclf(Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Identity(), 1.0, vec({0.0, 0.0}));
  const auto phi = HistoryBuffer::sampled(1.0, 0.001, [](double th) { return vec({th, 0.0}); }, Interpolation::linear);
  // Integral of theta^2 on [-1, 0] is 1/3; trapezoid error is h^2 / 6 for this integrand.
  CHECK(v.eval_v2(phi) == Approx(1.0 / 3.0).margin(1e-6));
}

TEST_CASE("obstacle and pairwise safe sets")
{
  const auto h = obstacle_h(PositionSlot{0}, Eigen::Vector2d(0.0, 0.0), 1.0);
  CHECK(h.value(vec({2.0, 0.0})) == 3.0);
  CHECK(h.value(vec({0.6, 0.8})) == Approx(0.0).margin(1e-15));
  CHECK(h.value(vec({0.0, 0.0})) < 0.0);
  const auto hp = pairwise_h(PositionSlot{0}, PositionSlot{3}, 0.5);
  CHECK(hp.value(vec({1.0, 1.0, 0.0, 1.0, 1.0, 0.0})) == -0.25);
  CHECK_THROWS_AS(obstacle_h(PositionSlot{0}, Eigen::Vector2d::Zero(), 0.0), ConfigError);
  CHECK_THROWS_AS(pairwise_h(PositionSlot{0}, PositionSlot{3}, 0.0), ConfigError);
}

TEST_CASE("reciprocal barrier")
{
  const auto h = obstacle_h(PositionSlot{0}, Eigen::Vector2d(0.0, 0.0), 1.0);
  const auto b = reciprocal_barrier(h);
  CHECK(b.kind == FunctionalKind::barrier);
  CHECK(b.eval_v1(vec({2.0, 0.0})) == Approx(1.0 / 3.0));
  CHECK(1.0 / b.eval_v1(vec({2.0, 0.0})) == Approx(3.0));

  SECTION("diverges at the boundary")
  {
    const double r = std::sqrt(1.0 + 5e-7);
    CHECK(h.value(vec({r, 0.0})) < 1e-6);
    CHECK(b.eval_v1(vec({r, 0.0})) > 1e6);
  }
  SECTION("domain error outside the safe set")
  {
    CHECK_THROWS_AS(b.eval_v1(vec({0.5, 0.0})), BarrierDomainError);
    try {
      b.eval_v1(vec({0.5, 0.0}));
    } catch (const BarrierDomainError & e) {
      CHECK(e.h() == Approx(-0.75));
    }
  }
  SECTION("1/B = h wherever defined")
  {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    for (int k = 0; k < 100; ++k) {
      const auto x = vec({u(rng), u(rng)});
      if (h.value(x) <= 0.0) { continue; }
      CHECK(1.0 / b.eval_v1(x) == Approx(h.value(x)).epsilon(1e-14));
    }
  }
  SECTION("gradient matches finite differences")
  {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    for (int k = 0; k < 100; ++k) {
      const auto x = vec({u(rng), u(rng)});
      if (h.value(x) <= 0.1) { continue; }
      CHECK(gradient_error(b, x) < 1e-5);
    }
  }
  SECTION("exponential shape keeps the class-K bound and a consistent gradient")
  {
    BarrierShape shape;
    shape.decay = 0.25;
    const auto be = reciprocal_barrier(h, shape);
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int k = 0; k < 100; ++k) {
      const auto x = vec({u(rng), u(rng)});
      const double hv = h.value(x);
      if (hv <= 0.1) { continue; }
      CHECK(1.0 / be.eval_v1(x) == Approx(hv * std::exp(hv / 0.25)).epsilon(1e-12));
      CHECK(1.0 / be.eval_v1(x) >= hv);
      CHECK(gradient_error(be, x) < 1e-5);
    }
  }
}

TEST_CASE("harmonic aggregate")
{
  const auto h1 = obstacle_h(PositionSlot{0}, Eigen::Vector2d(0.0, 0.0), 1.0);
  const auto h2 = obstacle_h(PositionSlot{0}, Eigen::Vector2d(3.0, 0.0), 0.5);
  const auto agg = harmonic_h({h1, h2});
  const auto x = vec({1.5, 1.0});
  CHECK(1.0 / agg.value(x) == Approx(1.0 / h1.value(x) + 1.0 / h2.value(x)));
  CHECK(agg.value(x) < std::min(h1.value(x), h2.value(x)));
  const auto b = reciprocal_barrier(agg);
  CHECK(gradient_error(b, x) < 1e-5);
}
