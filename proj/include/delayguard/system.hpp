#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <vector>

#include "delayguard/history.hpp"

namespace delayguard {

/// Control-affine interconnected delay system  x_i' = f_i(x_t) + g_i(x_t) u_i.
struct SystemModel
{
  SubsystemLayout layout;
  std::vector<std::size_t> input_dims;
  /// Stacked drift f(phi), length n.
  std::function<Eigen::VectorXd(const HistoryView &)> drift;
  /// g_i(phi), n_i x m_i.
  std::function<Eigen::MatrixXd(const HistoryView &, std::size_t)> input_map;

  std::size_t input_dim(std::size_t i) const
  {
    layout.check(i);
    return input_dims.at(i);
  }

  /// f(phi) + blockdiag(g_i(phi)) u for stacked per-subsystem controls.
  Eigen::VectorXd rhs(const HistoryView & phi, const std::vector<Eigen::VectorXd> & u) const
  {
    Eigen::VectorXd out = drift(phi);
    for (std::size_t i = 0; i < layout.count(); ++i) {
      const auto off = static_cast<Eigen::Index>(layout.offset(i));
      const auto len = static_cast<Eigen::Index>(layout.dim(i));
      out.segment(off, len) += input_map(phi, i) * u[i];
    }
    return out;
  }
};

}  // namespace delayguard
