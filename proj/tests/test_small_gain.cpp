#include <catch_amalgamated.hpp>

#include <random>

#include <Eigen/Eigenvalues>

#include "delayguard/small_gain.hpp"

using namespace delayguard;
using Catch::Approx;

TEST_CASE("uniform gains follow the closed form gamma (p - 1) / rho")
{
  const auto ok = check_small_gain(GainGraph::uniform(4, 1.0, 0.2));
  CHECK(ok.spectral_radius == Approx(0.6).margin(1e-9));
  CHECK(ok.pass);
  const auto bad = check_small_gain(GainGraph::uniform(4, 1.0, 0.5));
  CHECK(bad.spectral_radius == Approx(1.5).margin(1e-9));
  CHECK_FALSE(bad.pass);
  for (std::size_t p : {2u, 3u, 7u}) {
    CHECK(check_small_gain(GainGraph::uniform(p, 2.0, 0.3)).spectral_radius == Approx(0.15 * static_cast<double>(p - 1)).margin(1e-9));
  }
}

TEST_CASE("decoupled gains pass with radius zero")
{
  const auto c = check_small_gain(GainGraph::uniform(4, 1.0, 0.0));
  CHECK(c.spectral_radius == 0.0);
  CHECK(c.pass);
}

TEST_CASE("agrees with a dense eigensolver on random nonnegative graphs")
{
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> r(0.5, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index n = 2 + trial % 6;
    GainGraph gg;
    gg.rho_bar = Eigen::VectorXd(n);
    gg.gamma_bar = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      gg.rho_bar(i) = r(rng);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i != j) { gg.gamma_bar(i, j) = g(rng); }
      }
    }
    const double oracle = gg.gain_matrix().eigenvalues().cwiseAbs().maxCoeff();
    const auto c = check_small_gain(gg);
    CHECK(c.spectral_radius == Approx(oracle).epsilon(1e-9));
    CHECK(c.spectral_radius >= oracle * (1.0 - 1e-12));
  }
}

TEST_CASE("scaling rho and gamma together leaves the verdict unchanged")
{
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> g(0.0, 0.6);
  for (int trial = 0; trial < 100; ++trial) {
    GainGraph gg = GainGraph::uniform(4, 1.0, 0.0);
    for (Eigen::Index i = 0; i < 4; ++i) {
      for (Eigen::Index j = 0; j < 4; ++j) {
        if (i != j) { gg.gamma_bar(i, j) = g(rng); }
      }
    }
    GainGraph scaled = gg;
    scaled.rho_bar *= 7.5;
    scaled.gamma_bar *= 7.5;
    CHECK(check_small_gain(gg).pass == check_small_gain(scaled).pass);
  }
}

TEST_CASE("invalid gain graphs are rejected")
{
  GainGraph g = GainGraph::uniform(3, 1.0, 0.2);
  g.rho_bar(1) = 0.0;
  CHECK_THROWS_AS(check_small_gain(g), ConfigError);
  g = GainGraph::uniform(3, 1.0, 0.2);
  g.gamma_bar(0, 0) = 0.1;
  CHECK_THROWS_AS(check_small_gain(g), ConfigError);
  g = GainGraph::uniform(3, 1.0, 0.2);
  g.gamma_bar(0, 1) = -0.1;
  CHECK_THROWS_AS(check_small_gain(g), ConfigError);
}
