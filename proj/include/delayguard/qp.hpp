#pragma once

/**
 * @file
 * @brief Small dense least-distance QP solved by active-set enumeration.
 */

#include <Eigen/Core>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "delayguard/errors.hpp"

namespace delayguard {

/**
 * @brief min 0.5 * sum_k w_k (z_k - z0_k)^2  s.t.  C z <= d.
 *
 * Intended for a handful of variables and rows.
 */
struct LeastDistanceQp
{
  Eigen::VectorXd z0;
  Eigen::VectorXd weights;  // empty means all ones
  Eigen::MatrixXd C;
  Eigen::VectorXd d;
};

struct QpSolution
{
  Eigen::VectorXd z;
  std::vector<std::size_t> active;
  Eigen::VectorXd multipliers;
};

namespace detail {

// Calls fn(subset) for all k-subsets of {0..n-1} in lexicographic order until fn returns true.
template<typename F>
bool for_each_combination(std::size_t n, std::size_t k, F && fn)
{
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) { idx[i] = i; }
  if (k > n) { return false; }
  while (true) {
    if (fn(idx)) { return true; }
    if (k == 0) { return false; }
    std::size_t pos = k;
    while (pos > 0 && idx[pos - 1] == n - k + pos - 1) { --pos; }
    if (pos == 0) { return false; }
    ++idx[pos - 1];
    for (std::size_t j = pos; j < k; ++j) { idx[j] = idx[j - 1] + 1; }
  }
}

}  // namespace detail

/**
 * @brief Exhaustive active-set enumeration.
 *
 * Candidate active sets are visited smallest first, then lexicographically; the first
 * candidate satisfying the KKT conditions (primal feasibility, nonnegative multipliers)
 * is returned. The objective is strictly convex, so the minimizer is unique; only the
 * reported active set depends on the visiting order when constraints are degenerate.
 * Returns nullopt if no candidate is KKT, i.e. the polyhedron is empty.
 */
inline std::optional<QpSolution> solve_least_distance(const LeastDistanceQp & qp, double feas_tol = 1e-9)
{
  const Eigen::Index n = qp.z0.size();
  const Eigen::Index rows = qp.C.rows();
  if (qp.C.cols() != n && rows > 0) { throw DomainError("qp: constraint matrix has wrong column count"); }
  if (qp.d.size() != rows) { throw DomainError("qp: bound vector has wrong length"); }
  const Eigen::VectorXd w = qp.weights.size() == 0 ? Eigen::VectorXd::Ones(n) : qp.weights;
  if (w.size() != n || (w.array() <= 0.0).any()) { throw DomainError("qp: weights must be positive"); }
  const Eigen::VectorXd w_inv = w.cwiseInverse();

  const double scale = 1.0 + (rows > 0 ? qp.d.cwiseAbs().maxCoeff() : 0.0);
  auto feasible = [&](const Eigen::VectorXd & z) {
    return rows == 0 || ((qp.C * z - qp.d).array() <= feas_tol * scale).all();
  };

  std::optional<QpSolution> found;
  const auto max_active = static_cast<std::size_t>(std::min(n, rows));
  for (std::size_t k = 0; k <= max_active && !found; ++k) {
    detail::for_each_combination(static_cast<std::size_t>(rows), k, [&](const std::vector<std::size_t> & set) {
      const auto ks = static_cast<Eigen::Index>(set.size());
      Eigen::MatrixXd cs(ks, n);
      Eigen::VectorXd ds(ks);
      for (Eigen::Index r = 0; r < ks; ++r) {
        cs.row(r) = qp.C.row(static_cast<Eigen::Index>(set[static_cast<std::size_t>(r)]));
        ds(r) = qp.d(static_cast<Eigen::Index>(set[static_cast<std::size_t>(r)]));
      }
      Eigen::VectorXd lambda = Eigen::VectorXd::Zero(ks);
      Eigen::VectorXd z = qp.z0;
      if (ks > 0) {
        const Eigen::MatrixXd cw = cs * w_inv.asDiagonal();
        const Eigen::MatrixXd gram = cw * cs.transpose();
        Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
        lu.setThreshold(1e-12);
        if (lu.rank() < ks) { return false; }
        lambda = lu.solve(cs * qp.z0 - ds);
        const double lam_tol = 1e-12 * (1.0 + lambda.cwiseAbs().maxCoeff());
        if ((lambda.array() < -lam_tol).any()) { return false; }
        z = qp.z0 - cw.transpose() * lambda;
      }
      if (!feasible(z)) { return false; }
      found = QpSolution{z, set, lambda};
      return true;
    });
  }
  return found;
}

/// Result of the safety filter min |u - u_nom|^2 s.t. A u <= b.
struct SafetyQpResult
{
  Eigen::VectorXd u;
  std::vector<std::size_t> active;
  Eigen::VectorXd slacks;  // b - A u
  bool feasible{true};
  double max_violation{0.0};
};

/**
 * @brief Safety filter. On infeasibility, returns the minimizer of
 * |u - u_nom|^2 + w s^2 subject to A u - s <= b, s >= 0 with a large w, which
 * approximates the least maximum violation, and flags the result.
 */
inline SafetyQpResult solve_filter_qp(
  const Eigen::VectorXd & u_nom, const Eigen::MatrixXd & A, const Eigen::VectorXd & b, double violation_weight = 1e8)
{
  const Eigen::Index m = u_nom.size();
  if (A.rows() > 0 && A.cols() != m) { throw DomainError("safety qp: row length does not match control dimension"); }
  SafetyQpResult out;
  LeastDistanceQp qp{u_nom, Eigen::VectorXd(), A, b};
  if (auto sol = solve_least_distance(qp)) {
    out.u = sol->z;
    out.active = sol->active;
  } else {
    const Eigen::Index rows = A.rows();
    LeastDistanceQp relaxed;
    relaxed.z0 = Eigen::VectorXd::Zero(m + 1);
    relaxed.z0.head(m) = u_nom;
    relaxed.weights = Eigen::VectorXd::Ones(m + 1);
    relaxed.weights(m) = violation_weight;
    relaxed.C = Eigen::MatrixXd::Zero(rows + 1, m + 1);
    relaxed.C.topLeftCorner(rows, m) = A;
    relaxed.C.col(m).head(rows).setConstant(-1.0);
    relaxed.C(rows, m) = -1.0;
    relaxed.d = Eigen::VectorXd::Zero(rows + 1);
    relaxed.d.head(rows) = b;
    out.feasible = false;
    if (auto sol = solve_least_distance(relaxed)) {
      out.u = sol->z.head(m);
      for (auto k : sol->active) {
        if (k < static_cast<std::size_t>(rows)) { out.active.push_back(k); }
      }
    } else {
      out.u = u_nom;
    }
  }
  out.slacks = A.rows() > 0 ? Eigen::VectorXd(b - A * out.u) : Eigen::VectorXd();
  out.max_violation = A.rows() > 0 ? std::max(0.0, -out.slacks.minCoeff()) : 0.0;
  return out;
}

}  // namespace delayguard
