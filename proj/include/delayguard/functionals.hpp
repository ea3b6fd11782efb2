#pragma once

/**
 * @file
 * @brief Separable Lyapunov/barrier functionals on delay states and their Lie data.
 */

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "delayguard/errors.hpp"
#include "delayguard/history.hpp"

namespace delayguard {

enum class FunctionalKind { lyapunov, barrier };

/**
 * @brief A separable functional V(phi) = V1(phi(0)) + V2(phi).
 *
 * Lyapunov bundles act on one subsystem's history phi_i; barrier bundles act on the
 * full stacked history. `grad_v1` returns a row vector of the same length as its argument.
 */
struct FunctionalBundle
{
  FunctionalKind kind{FunctionalKind::lyapunov};
  std::function<double(const Eigen::VectorXd &)> eval_v1;
  std::function<Eigen::RowVectorXd(const Eigen::VectorXd &)> grad_v1;
  std::function<double(const HistoryBuffer &)> eval_v2;
  std::function<double(const HistoryBuffer &)> dini_v2;

  double value(const HistoryBuffer & phi) const
  {
    const Eigen::VectorXd head = phi.head();
    return eval_v1(head) + eval_v2(phi);
  }
};

/// Lie-derivative data of a bundle along the control-affine dynamics.
struct LieData
{
  double lf_v1{0.0};
  Eigen::RowVectorXd lg_v1;
  double dini_v2{0.0};
};

/**
 * @brief L_f V1, L_g V1 and D+V2 at phi.
 *
 * Lyapunov kind: `phi` is phi_i, `f_val` is f_i and the gradient is the block-i gradient.
 * Barrier kind: `phi` is the full history and `f_val` the stacked drift, so L_f sums
 * over all subsystems; only block i of the gradient multiplies g_i.
 */
inline LieData lie_data(
  const FunctionalBundle & bundle,
  const HistoryBuffer & phi,
  const Eigen::VectorXd & f_val,
  const Eigen::MatrixXd & g_val,
  const SubsystemLayout & layout,
  std::size_t i)
{
  const Eigen::VectorXd x = phi.head();
  const Eigen::RowVectorXd grad = bundle.grad_v1(x);
  if (grad.size() != x.size() || f_val.size() != x.size()) {
    throw DomainError("lie_data: drift/gradient dimension does not match the functional's state");
  }
  Eigen::Index off = 0;
  Eigen::Index len = x.size();
  if (bundle.kind == FunctionalKind::barrier) {
    layout.check(i);
    if (static_cast<std::size_t>(x.size()) != layout.total_dim()) {
      throw DomainError("lie_data: barrier functionals take the full stacked state");
    }
    off = static_cast<Eigen::Index>(layout.offset(i));
    len = static_cast<Eigen::Index>(layout.dim(i));
  }
  if (g_val.rows() != len) { throw DomainError("lie_data: input map has wrong row count"); }
  LieData out;
  out.lf_v1 = grad.dot(f_val.transpose());
  out.lg_v1 = grad.segment(off, len) * g_val;
  out.dini_v2 = bundle.dini_v2(phi);
  return out;
}

/// Overload for a single-subsystem (or self-contained) Lyapunov bundle.
inline LieData lie_data(
  const FunctionalBundle & bundle, const HistoryBuffer & phi, const Eigen::VectorXd & f_val, const Eigen::MatrixXd & g_val)
{
  return lie_data(bundle, phi, f_val, g_val, SubsystemLayout({phi.dim()}), 0);
}

namespace detail {

inline void require_spd(const Eigen::MatrixXd & m, const char * name)
{
  if (m.rows() != m.cols() || !m.isApprox(m.transpose(), 1e-12)) {
    throw ConfigError(std::string(name) + " must be symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) { throw ConfigError(std::string(name) + " must be positive definite"); }
}

}  // namespace detail

/**
 * @brief Quadratic MCLF on the position block of a subsystem.
 *
 * With p = x.head(k) (k = target size):
 *   V1 = (p - q)' P (p - q),
 *   V2 = sigma * int_{-delta}^0 (p(theta) - q)' Q (p(theta) - q) dtheta  (trapezoidal),
 *   D+V2 = sigma * [e(0)' Q e(0) - e(-delta)' Q e(-delta)].
 */
inline FunctionalBundle quadratic_mclf(
  const Eigen::MatrixXd & P, const Eigen::MatrixXd & Q, double sigma, const Eigen::VectorXd & target)
{
  detail::require_spd(P, "P");
  detail::require_spd(Q, "Q");
  if (!(sigma > 0.0)) { throw ConfigError("sigma must be positive"); }
  const Eigen::Index k = target.size();
  if (P.rows() != k || Q.rows() != k) { throw ConfigError("P, Q and target dimensions differ"); }

  // Runs once per stored sample inside the quadrature, so no temporaries.
  auto quad = [Q, target, k](const auto & x) {
    double s = 0.0;
    for (Eigen::Index r = 0; r < k; ++r) {
      const double er = x(r) - target(r);
      for (Eigen::Index c = 0; c < k; ++c) { s += er * Q(r, c) * (x(c) - target(c)); }
    }
    return s;
  };

  FunctionalBundle b;
  b.kind = FunctionalKind::lyapunov;
  b.eval_v1 = [P, target, k](const Eigen::VectorXd & x) {
    if (x.size() < k) { throw DomainError("quadratic_mclf: state shorter than target"); }
    const Eigen::VectorXd e = x.head(k) - target;
    return e.dot(P * e);
  };
  b.grad_v1 = [P, target, k](const Eigen::VectorXd & x) {
    if (x.size() < k) { throw DomainError("quadratic_mclf: state shorter than target"); }
    Eigen::RowVectorXd g = Eigen::RowVectorXd::Zero(x.size());
    g.head(k) = 2.0 * (x.head(k) - target).transpose() * P;
    return g;
  };
  b.eval_v2 = [sigma, quad](const HistoryBuffer & phi) {
    return sigma * phi.integrate([&](const auto & x) { return quad(x); });
  };
  b.dini_v2 = [sigma, quad](const HistoryBuffer & phi) {
    return sigma * (quad(phi.head()) - quad(phi.query(-phi.delta())));
  };
  return b;
}

/**
 * @brief Safe-set functional h with safe region {h > 0}.
 *
 * Every instance here depends on the current state phi(0) only, so `value` and
 * `gradient` take the stacked current state.
 */
struct SafeSetFunctional
{
  std::string label;
  std::function<double(const Eigen::VectorXd &)> value;
  std::function<Eigen::RowVectorXd(const Eigen::VectorXd &)> gradient;

  double eval(const HistoryView & phi) const { return value(phi.head()); }
};

/// Location of a planar position inside the stacked state.
struct PositionSlot
{
  std::size_t offset{0};
};

/// h = |p - r|^2 - R^2, positive outside the disc.
inline SafeSetFunctional obstacle_h(PositionSlot slot, const Eigen::Vector2d & center, double radius, std::string label = "obstacle")
{
  if (!(radius > 0.0)) { throw ConfigError("obstacle radius must be positive"); }
  SafeSetFunctional h;
  h.label = std::move(label);
  const auto off = static_cast<Eigen::Index>(slot.offset);
  h.value = [off, center, radius](const Eigen::VectorXd & x) {
    return (x.segment<2>(off) - center).squaredNorm() - radius * radius;
  };
  h.gradient = [off, center](const Eigen::VectorXd & x) {
    Eigen::RowVectorXd g = Eigen::RowVectorXd::Zero(x.size());
    g.segment<2>(off) = 2.0 * (x.segment<2>(off) - center).transpose();
    return g;
  };
  return h;
}

/// h = |p_i - p_j|^2 - d_min^2.
inline SafeSetFunctional pairwise_h(PositionSlot a, PositionSlot b, double d_min, std::string label = "pairwise")
{
  if (!(d_min > 0.0)) { throw ConfigError("pairwise clearance must be positive"); }
  SafeSetFunctional h;
  h.label = std::move(label);
  const auto oa = static_cast<Eigen::Index>(a.offset);
  const auto ob = static_cast<Eigen::Index>(b.offset);
  h.value = [oa, ob, d_min](const Eigen::VectorXd & x) {
    return (x.segment<2>(oa) - x.segment<2>(ob)).squaredNorm() - d_min * d_min;
  };
  h.gradient = [oa, ob](const Eigen::VectorXd & x) {
    Eigen::RowVectorXd g = Eigen::RowVectorXd::Zero(x.size());
    const Eigen::Vector2d d = x.segment<2>(oa) - x.segment<2>(ob);
    g.segment<2>(oa) += 2.0 * d.transpose();
    g.segment<2>(ob) -= 2.0 * d.transpose();
    return g;
  };
  return h;
}

/// Harmonic aggregate: h = 1 / sum_k (1 / h_k), so 1/h is the sum of reciprocal barriers.
inline SafeSetFunctional harmonic_h(std::vector<SafeSetFunctional> parts, std::string label = "aggregate")
{
  SafeSetFunctional h;
  h.label = std::move(label);
  h.value = [parts](const Eigen::VectorXd & x) {
    double inv = 0.0;
    for (const auto & p : parts) {
      const double v = p.value(x);
      if (!(v > 0.0)) { return std::min(v, 0.0); }
      inv += 1.0 / v;
    }
    return 1.0 / inv;
  };
  h.gradient = [parts](const Eigen::VectorXd & x) {
    double inv = 0.0;
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(x.size());
    for (const auto & p : parts) {
      const double v = p.value(x);
      inv += 1.0 / v;
      acc += p.gradient(x) / (v * v);
    }
    return Eigen::RowVectorXd(acc / (inv * inv));
  };
  return h;
}

/// Options for `reciprocal_barrier`.
struct BarrierShape
{
  /// Length scale lambda of the factor exp(-h / lambda); infinity gives B = 1/h.
  double decay{std::numeric_limits<double>::infinity()};
  /// Optional delay-dependent part B2 and its Dini derivative (both default to zero).
  std::function<double(const HistoryBuffer &)> eval_v2;
  std::function<double(const HistoryBuffer &)> dini_v2;
};

/**
 * @brief Barrier bundle B1 = exp(-h/lambda) / h built from a safe-set functional.
 *
 * With the default infinite decay, B1 = 1/h and 1/B1 = h (identity class-K bounds).
 * A finite decay keeps 1/B1 = h exp(h/lambda), still a class-K-infinity function of h,
 * while flattening B1 far from the boundary.
 * Evaluating where h <= 0 throws BarrierDomainError.
 */
inline FunctionalBundle reciprocal_barrier(const SafeSetFunctional & h, BarrierShape shape = {})
{
  if (!(shape.decay > 0.0)) { throw ConfigError("barrier decay must be positive"); }
  const double inv_decay = std::isinf(shape.decay) ? 0.0 : 1.0 / shape.decay;
  auto guard = [label = h.label](double v) {
    if (!(v > 0.0)) {
      throw BarrierDomainError("barrier '" + label + "' evaluated outside the safe set (h = " + std::to_string(v) + ")", v);
    }
  };
  FunctionalBundle b;
  b.kind = FunctionalKind::barrier;
  b.eval_v1 = [h, guard, inv_decay](const Eigen::VectorXd & x) {
    const double v = h.value(x);
    guard(v);
    return inv_decay == 0.0 ? 1.0 / v : std::exp(-v * inv_decay) / v;
  };
  b.grad_v1 = [h, guard, inv_decay](const Eigen::VectorXd & x) {
    const double v = h.value(x);
    guard(v);
    const double bv = inv_decay == 0.0 ? 1.0 / v : std::exp(-v * inv_decay) / v;
    return Eigen::RowVectorXd(-bv * (1.0 / v + inv_decay) * h.gradient(x));
  };
  if (shape.eval_v2) {
    b.eval_v2 = shape.eval_v2;
  } else {
    b.eval_v2 = [](const HistoryBuffer &) { return 0.0; };
  }
  if (shape.dini_v2) {
    b.dini_v2 = shape.dini_v2;
  } else {
    b.dini_v2 = [](const HistoryBuffer &) { return 0.0; };
  }
  return b;
}

}  // namespace delayguard
