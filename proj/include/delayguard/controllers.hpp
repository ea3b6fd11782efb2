#pragma once

/**
 * @file
 * @brief Universal-formula stabilizer, QP safety filter and sliding-mode safe stabilizer.
 */

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "delayguard/errors.hpp"
#include "delayguard/functionals.hpp"
#include "delayguard/history.hpp"
#include "delayguard/qp.hpp"
#include "delayguard/small_gain.hpp"
#include "delayguard/system.hpp"

namespace delayguard {

enum class Branch { zero, sontag, qp_inactive, qp_active, qp_infeasible, sliding, sliding_degenerate };

inline const char * to_string(Branch b)
{
  switch (b) {
    case Branch::zero: return "zero";
    case Branch::sontag: return "sontag";
    case Branch::qp_inactive: return "qp-inactive";
    case Branch::qp_active: return "qp-active";
    case Branch::qp_infeasible: return "qp-infeasible";
    case Branch::sliding: return "sliding";
    case Branch::sliding_degenerate: return "sliding-degenerate";
  }
  return "?";
}

struct ConstraintMargin
{
  std::size_t id{0};
  double slack{0.0};
};

/// Per-subsystem control plus the quantities needed to audit it.
struct ControlDecision
{
  static constexpr double na = std::numeric_limits<double>::quiet_NaN();

  Eigen::VectorXd u;
  Branch branch{Branch::zero};
  std::vector<std::size_t> active;
  std::vector<ConstraintMargin> margins;
  bool infeasible{false};

  double a{na};
  double b_norm{na};
  double V{na};
  double U{na};
  double W{na};
  /// L_f V1 + D+V2 + L_g V1 u + rho(V_i) - sum gamma(V_j); nonpositive under the stabilizer.
  double stabilizer_residual{na};
  /// Largest L_f B + D+B2 + L_g B u - (eta(h) - sum chi(h_j)) over the filter rows.
  double barrier_residual{na};
  /// U (F + L + G u) + K U^2 / (|U| + w); zero for the sliding controller.
  double sliding_residual{na};
};

/**
 * @brief Universal formula u = -[(a + sqrt(a^2 + |b|^4)) / |b|^2] b'.
 *
 * Returns zero when b = 0. For b != 0, a + b u = -sqrt(a^2 + |b|^4).
 */
inline Eigen::VectorXd sontag_control(double a, const Eigen::RowVectorXd & b)
{
  const double bb = b.squaredNorm();
  if (bb == 0.0) { return Eigen::VectorXd::Zero(b.size()); }
  const double root = std::hypot(a, bb);
  // a + root cancels for a << 0; use the conjugate form there.
  const double coef = a >= 0.0 ? (a + root) / bb : bb / (root - a);
  return -coef * b.transpose();
}

/**
 * @brief Distributed stabilizer for subsystem i.
 *
 * a_i = L_f V_i1 + D+V_i2 + rho_i V_i - sum_j gamma_ij V_j, b_i = L_g V_i1.
 * `mclfs[j]` acts on phi_j. `drift` may carry a precomputed f(phi).
 */
inline ControlDecision stabilizer(
  const HistoryBuffer & phi,
  const SystemModel & model,
  const std::vector<FunctionalBundle> & mclfs,
  const GainGraph & gains,
  std::size_t i,
  const Eigen::VectorXd * drift = nullptr)
{
  const auto & layout = model.layout;
  layout.check(i);
  const std::size_t p = layout.count();
  if (mclfs.size() != p || gains.size() != p) { throw DomainError("stabilizer: need one MCLF and one gain per subsystem"); }

  const Eigen::VectorXd f_full = drift != nullptr ? *drift : model.drift(phi);
  const auto off = static_cast<Eigen::Index>(layout.offset(i));
  const auto len = static_cast<Eigen::Index>(layout.dim(i));
  const Eigen::VectorXd f_i = f_full.segment(off, len);
  const Eigen::MatrixXd g_i = model.input_map(phi, i);

  const HistoryBuffer phi_i = sub_view(phi, layout, i);
  const LieData lie = lie_data(mclfs[i], phi_i, f_i, g_i);
  const double v_i = mclfs[i].value(phi_i);
  double coupling = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    const double gij = gains.gamma_bar(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    if (j == i || gij == 0.0) { continue; }
    coupling += gij * mclfs[j].value(sub_view(phi, layout, j));
  }
  const double rho_term = gains.rho_bar(static_cast<Eigen::Index>(i)) * v_i;

  ControlDecision d;
  d.a = lie.lf_v1 + lie.dini_v2 + rho_term - coupling;
  d.b_norm = lie.lg_v1.norm();
  d.V = v_i;
  if (d.b_norm == 0.0) {
    d.u = Eigen::VectorXd::Zero(lie.lg_v1.size());
    d.branch = Branch::zero;
  } else {
    d.u = sontag_control(d.a, lie.lg_v1);
    d.branch = Branch::sontag;
  }
  d.stabilizer_residual = lie.lf_v1 + lie.dini_v2 + lie.lg_v1.dot(d.u.transpose()) + rho_term - coupling;
  return d;
}

/// One half-plane A u <= b of the safety filter.
struct FilterRow
{
  Eigen::RowVectorXd A;
  double b{0.0};
};

/**
 * @brief min |u - u_nom|^2 s.t. A_k u <= b_k, by exhaustive active-set enumeration.
 *
 * Never throws on infeasibility: the result carries `infeasible` and a best-effort
 * control minimizing the largest violation.
 */
inline ControlDecision solve_safety_qp(const Eigen::VectorXd & u_nom, const std::vector<FilterRow> & rows)
{
  const auto m = u_nom.size();
  Eigen::MatrixXd A(static_cast<Eigen::Index>(rows.size()), m);
  Eigen::VectorXd b(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k].A.size() != m) { throw DomainError("solve_safety_qp: row length does not match control dimension"); }
    A.row(static_cast<Eigen::Index>(k)) = rows[k].A;
    b(static_cast<Eigen::Index>(k)) = rows[k].b;
  }
  const SafetyQpResult res = solve_filter_qp(u_nom, A, b);
  ControlDecision d;
  d.u = res.u;
  d.active = res.active;
  d.infeasible = !res.feasible;
  d.branch = d.infeasible ? Branch::qp_infeasible : (res.active.empty() ? Branch::qp_inactive : Branch::qp_active);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    d.margins.push_back({k, res.slacks(static_cast<Eigen::Index>(k))});
  }
  return d;
}

/**
 * @brief A barrier handled by the safety filter of one subsystem.
 *
 * Encodes  L_f B + D+B2 + L_{g_i} B u_i < eta * h - sum_j chi_j * h_j.
 */
struct BarrierConstraint
{
  FunctionalBundle barrier;
  SafeSetFunctional h;
  double eta_bar{1.0};
  std::vector<std::pair<double, SafeSetFunctional>> coupling;
};

/// Build the filter row for subsystem i from a barrier constraint.
inline FilterRow barrier_row(
  const BarrierConstraint & c,
  const HistoryBuffer & phi,
  const Eigen::VectorXd & f_full,
  const Eigen::MatrixXd & g_i,
  const SubsystemLayout & layout,
  std::size_t i,
  double margin,
  double * rhs_out = nullptr,
  double * drift_part_out = nullptr)
{
  const LieData lie = lie_data(c.barrier, phi, f_full, g_i, layout, i);
  const Eigen::VectorXd x = phi.head();
  double rhs = c.eta_bar * c.h.value(x);
  for (const auto & [chi, hj] : c.coupling) { rhs -= chi * hj.value(x); }
  if (rhs_out != nullptr) { *rhs_out = rhs; }
  if (drift_part_out != nullptr) { *drift_part_out = lie.lf_v1 + lie.dini_v2; }
  return FilterRow{lie.lg_v1, rhs - lie.lf_v1 - lie.dini_v2 - margin};
}

/**
 * @brief QP-filtered stabilizer: nominal control from `stabilizer`, one filter row per barrier.
 */
inline ControlDecision safety_filter(
  const HistoryBuffer & phi,
  const SystemModel & model,
  const std::vector<FunctionalBundle> & mclfs,
  const GainGraph & gains,
  const std::vector<BarrierConstraint> & barriers,
  std::size_t i,
  double margin = 1e-6)
{
  const Eigen::VectorXd f_full = model.drift(phi);
  const ControlDecision nominal = stabilizer(phi, model, mclfs, gains, i, &f_full);
  const Eigen::MatrixXd g_i = model.input_map(phi, i);

  std::vector<FilterRow> rows;
  std::vector<double> rhs(barriers.size());
  std::vector<double> drift_part(barriers.size());
  rows.reserve(barriers.size());
  for (std::size_t k = 0; k < barriers.size(); ++k) {
    rows.push_back(barrier_row(barriers[k], phi, f_full, g_i, model.layout, i, margin, &rhs[k], &drift_part[k]));
  }
  ControlDecision d = solve_safety_qp(nominal.u, rows);
  d.a = nominal.a;
  d.b_norm = nominal.b_norm;
  d.V = nominal.V;
  d.stabilizer_residual = nominal.stabilizer_residual;
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    worst = std::max(worst, drift_part[k] + rows[k].A.dot(d.u.transpose()) - rhs[k]);
  }
  if (!rows.empty()) { d.barrier_residual = worst; }
  return d;
}

/**
 * @brief Affine sliding functional U = V_i + sum_k w_k B_k - level.
 */
struct SlidingSurfaceSpec
{
  std::vector<double> weights;
  double gain{5.0};
  double boundary_layer{1e-2};
  double g_tol{1e-9};
  double level{0.0};

  void validate() const
  {
    if (!(gain > 0.0)) { throw ConfigError("sliding gain must be positive"); }
    if (!(boundary_layer > 0.0)) { throw ConfigError("sliding boundary layer must be positive"); }
    if (!(g_tol > 0.0)) { throw ConfigError("sliding g_tol must be positive"); }
    for (double w : weights) {
      if (!(w >= 0.0)) { throw ConfigError("sliding weights must be nonnegative"); }
    }
  }
};

/// Quantities entering D+U = F + G u + L.
struct SlidingTerms
{
  double U{0.0};
  Eigen::RowVectorXd H;
  double L{0.0};
  double F{0.0};
  Eigen::RowVectorXd G;
  Eigen::MatrixXd J1;
  Eigen::MatrixXd J2;
};

/**
 * @brief Evaluate the sliding functional and its derivative data for subsystem i.
 *
 * `mclf` acts on phi_i; `barriers` act on the full history (their weights come from
 * `spec.weights`). Throws DegenerateSurfaceError when |G| < g_tol.
 */
inline SlidingTerms sliding_terms(
  const HistoryBuffer & phi,
  const SystemModel & model,
  const FunctionalBundle & mclf,
  const std::vector<FunctionalBundle> & barriers,
  const SlidingSurfaceSpec & spec,
  std::size_t i,
  const Eigen::VectorXd * drift = nullptr)
{
  const auto & layout = model.layout;
  layout.check(i);
  if (spec.weights.size() != barriers.size()) { throw DomainError("sliding_terms: one weight per barrier required"); }
  const auto off = static_cast<Eigen::Index>(layout.offset(i));
  const auto len = static_cast<Eigen::Index>(layout.dim(i));

  const HistoryBuffer phi_i = sub_view(phi, layout, i);
  const Eigen::VectorXd x_i = phi_i.head();
  const Eigen::VectorXd x = phi.head();

  SlidingTerms t;
  t.U = mclf.value(phi_i) - spec.level;
  t.H = mclf.grad_v1(x_i);
  t.L = mclf.dini_v2(phi_i);
  for (std::size_t k = 0; k < barriers.size(); ++k) {
    const double w = spec.weights[k];
    if (w == 0.0) { continue; }
    t.U += w * barriers[k].value(phi);
    t.H += w * barriers[k].grad_v1(x).segment(off, len);
    t.L += w * barriers[k].dini_v2(phi);
  }

  const Eigen::VectorXd f_full = drift != nullptr ? *drift : model.drift(phi);
  const Eigen::VectorXd f_i = f_full.segment(off, len);
  const Eigen::MatrixXd g_i = model.input_map(phi, i);
  t.F = t.H.dot(f_i.transpose());
  t.G = t.H * g_i;
  const double gg = t.G.squaredNorm();
  if (!(std::sqrt(gg) >= spec.g_tol)) {
    throw DegenerateSurfaceError("sliding_terms: |G| below tolerance for subsystem " + std::to_string(i));
  }
  const Eigen::VectorXd gGt = g_i * t.G.transpose();  // n_i x 1
  const Eigen::MatrixXd a = gGt * f_i.transpose();
  const Eigen::MatrixXd bmat = f_i * gGt.transpose();
  t.J1 = (a - bmat) / (2.0 * gg);
  t.J2 = (a + bmat) / (2.0 * gg);
  return t;
}

/**
 * @brief u = -|G|^-2 G' (H J2 H' + L) - |G|^-2 G' K,  K = gain * U / (|U| + boundary_layer).
 */
inline ControlDecision sliding_control(const SlidingTerms & t, const SlidingSurfaceSpec & spec)
{
  const double gg = t.G.squaredNorm();
  if (!(std::sqrt(gg) >= spec.g_tol)) { throw DegenerateSurfaceError("sliding_control: |G| below tolerance"); }
  const double hj2h = t.H.dot(t.J2 * t.H.transpose());
  const double k_term = spec.gain * t.U / (std::abs(t.U) + spec.boundary_layer);
  const Eigen::VectorXd u_ideal = -(hj2h + t.L) / gg * t.G.transpose();
  ControlDecision d;
  d.u = u_ideal - (k_term / gg) * t.G.transpose();
  d.branch = Branch::sliding;
  d.U = t.U;
  d.W = 0.5 * t.U * t.U;
  d.sliding_residual = t.U * (t.F + t.L + t.G.dot(d.u.transpose())) + spec.gain * t.U * t.U / (std::abs(t.U) + spec.boundary_layer);
  return d;
}

}  // namespace delayguard
