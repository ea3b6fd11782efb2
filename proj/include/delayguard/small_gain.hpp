#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

#include "delayguard/errors.hpp"

namespace delayguard {

/**
 * @brief Linear gains over the interconnection graph.
 *
 * rho_bar holds the decay gains (rho_i or eta_i), gamma_bar the coupling gains
 * (gamma_ij or chi_ij) with a zero diagonal.
 */
struct GainGraph
{
  Eigen::VectorXd rho_bar;
  Eigen::MatrixXd gamma_bar;

  static GainGraph uniform(std::size_t p, double rho, double gamma)
  {
    const auto n = static_cast<Eigen::Index>(p);
    GainGraph g;
    g.rho_bar = Eigen::VectorXd::Constant(n, rho);
    g.gamma_bar = Eigen::MatrixXd::Constant(n, n, gamma);
    g.gamma_bar.diagonal().setZero();
    return g;
  }

  std::size_t size() const noexcept { return static_cast<std::size_t>(rho_bar.size()); }

  void validate() const
  {
    if (gamma_bar.rows() != rho_bar.size() || gamma_bar.cols() != rho_bar.size()) {
      throw ConfigError("gain graph: gamma must be p x p");
    }
    if ((rho_bar.array() <= 0.0).any()) { throw ConfigError("gain graph: rho_bar must be positive"); }
    if ((gamma_bar.array() < 0.0).any()) { throw ConfigError("gain graph: gamma_bar must be nonnegative"); }
    if ((gamma_bar.diagonal().array() != 0.0).any()) { throw ConfigError("gain graph: gamma_bar diagonal must be zero"); }
  }

  /// M_ij = gamma_ij / rho_j off the diagonal.
  Eigen::MatrixXd gain_matrix() const
  {
    Eigen::MatrixXd m = gamma_bar;
    for (Eigen::Index j = 0; j < m.cols(); ++j) { m.col(j) /= rho_bar(j); }
    m.diagonal().setZero();
    return m;
  }
};

struct SmallGainCertificate
{
  bool pass{false};
  double spectral_radius{0.0};
  int iterations{0};
};

/**
 * @brief Spectral radius of the gain matrix by power iteration.
 *
 * Iterates on M + I (same Perron vector, strictly dominant root for nonnegative M) and
 * stops once the Collatz-Wielandt bounds min/max (Mx)_k / x_k agree. The reported value
 * is the upper bound, so a pass is never optimistic.
 */
inline SmallGainCertificate check_small_gain(const GainGraph & g, double tol = 1e-13, int max_iter = 100000)
{
  g.validate();
  const Eigen::MatrixXd m = g.gain_matrix();
  const Eigen::Index n = m.rows();
  SmallGainCertificate cert;
  if (n == 0 || m.isZero(0.0)) {
    cert.pass = true;
    return cert;
  }
  Eigen::VectorXd x = Eigen::VectorXd::Ones(n);
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= max_iter; ++it) {
    const Eigen::VectorXd mx = m * x;
    lo = std::numeric_limits<double>::infinity();
    hi = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double r = mx(k) / x(k);
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    cert.iterations = it;
    if (hi - lo <= tol * std::max(1.0, hi)) { break; }
    x = (mx + x).normalized();
    // Keep strictly positive so the ratio bounds stay defined.
    x = x.cwiseMax(1e-300);
  }
  cert.spectral_radius = hi;
  cert.pass = hi < 1.0;
  return cert;
}

}  // namespace delayguard
