#pragma once

/**
 * @file
 * @brief Delay states: sampled trajectory segments on [-delta, 0].
 */

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "delayguard/errors.hpp"

namespace delayguard {

enum class Interpolation { linear, cubic_hermite };

/**
 * @brief Sampled piecewise-continuous segment phi on [-delta, 0].
 *
 * Samples are stored with absolute time stamps relative to an internal clock, so that
 * advancing the window only appends a head and drops stale samples. The oldest retained
 * sample may lie before -delta; it brackets the left end of the window.
 *
 * Each sample may carry an incoming and an outgoing slope (they differ at kinks, e.g. where
 * the control switches). A segment is cubic Hermite when its left end has an outgoing or
 * its right end an incoming slope on both sides; otherwise it is linear.
 */
class HistoryBuffer
{
public:
  HistoryBuffer() = default;

  /// Build from explicit offsets (strictly increasing, first <= -delta, last == 0).
  HistoryBuffer(
    double delta,
    const std::vector<double> & offsets,
    const std::vector<Eigen::VectorXd> & states,
    Interpolation interp = Interpolation::cubic_hermite,
    const std::vector<std::optional<Eigen::VectorXd>> & slopes = {})
  : delta_(delta), interp_(interp)
  {
    if (!(delta > 0.0) || !std::isfinite(delta)) { throw DomainError("history: delta must be positive"); }
    if (offsets.size() != states.size() || offsets.size() < 2) {
      throw DomainError("history: need at least two samples with matching offsets");
    }
    if (!slopes.empty() && slopes.size() != states.size()) {
      throw DomainError("history: slope count does not match sample count");
    }
    dim_ = static_cast<std::size_t>(states.front().size());
    if (offsets.front() > -delta) { throw DomainError("history: first offset must be -delta"); }
    if (offsets.back() != 0.0) { throw DomainError("history: last offset must be 0"); }
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      if (static_cast<std::size_t>(states[k].size()) != dim_) {
        throw DomainError("history: all states must share one dimension");
      }
      if (k > 0 && !(offsets[k] > offsets[k - 1])) {
        throw DomainError("history: offsets must be strictly increasing");
      }
      std::optional<Eigen::VectorXd> slope;
      if (!slopes.empty()) { slope = slopes[k]; }
      push_raw(offsets[k], states[k], slope);
    }
    now_ = 0.0;
    trim();
  }

  /// phi(theta) = state for all theta.
  static HistoryBuffer constant(
    double delta, const Eigen::VectorXd & state, Interpolation interp = Interpolation::cubic_hermite)
  {
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(state.size());
    return HistoryBuffer(delta, {-delta, 0.0}, {state, state}, interp, {zero, zero});
  }

  /**
   * @brief Sample a function on the uniform grid theta_k = -delta + k * step.
   *
   * The grid is anchored at 0 so later advances by `step` land on the same lattice.
   * If `slope` is given it provides the derivative used by Hermite interpolation.
   */
  static HistoryBuffer sampled(
    double delta,
    double step,
    const std::function<Eigen::VectorXd(double)> & fn,
    Interpolation interp = Interpolation::cubic_hermite,
    const std::function<Eigen::VectorXd(double)> & slope = {})
  {
    if (!(step > 0.0)) { throw DomainError("history: sampling step must be positive"); }
    const auto count = static_cast<long>(std::ceil(delta / step - 1e-9));
    std::vector<double> offs;
    std::vector<Eigen::VectorXd> xs;
    std::vector<std::optional<Eigen::VectorXd>> ds;
    for (long k = count; k >= 0; --k) {
      const double theta = k == 0 ? 0.0 : -static_cast<double>(k) * step;
      offs.push_back(theta);
      xs.push_back(fn(theta));
      if (slope) { ds.emplace_back(slope(theta)); }
    }
    return HistoryBuffer(delta, offs, xs, interp, ds);
  }

  double delta() const noexcept { return delta_; }
  std::size_t dim() const noexcept { return dim_; }
  Interpolation interpolation() const noexcept { return interp_; }

  /// Number of retained samples (including the bracketing sample before -delta).
  std::size_t size() const noexcept { return times_.size() - begin_; }

  double offset(std::size_t k) const { return times_[begin_ + k] - now_; }

  Eigen::Map<const Eigen::VectorXd> state(std::size_t k) const
  {
    return Eigen::Map<const Eigen::VectorXd>(data_.data() + (begin_ + k) * dim_, static_cast<Eigen::Index>(dim_));
  }

  /// Incoming slope of sample k.
  std::optional<Eigen::VectorXd> slope(std::size_t k) const
  {
    if (!has_slope_[begin_ + k]) { return std::nullopt; }
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(
      slopes_.data() + (begin_ + k) * dim_, static_cast<Eigen::Index>(dim_)));
  }

  /// Outgoing slope of sample k; the incoming one when no separate value is stored.
  std::optional<Eigen::VectorXd> out_slope(std::size_t k) const
  {
    if (!has_out_[begin_ + k]) { return slope(k); }
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(
      out_slopes_.data() + (begin_ + k) * dim_, static_cast<Eigen::Index>(dim_)));
  }

  std::vector<double> offsets() const
  {
    std::vector<double> out(size());
    for (std::size_t k = 0; k < out.size(); ++k) { out[k] = offset(k); }
    return out;
  }

  /// phi(0).
  Eigen::Map<const Eigen::VectorXd> head() const { return state(size() - 1); }

  /**
   * @brief phi(theta) for theta in [-delta, 0].
   *
   * Stored offsets return the stored sample bit-for-bit.
   */
  Eigen::VectorXd query(double theta) const
  {
    if (!(theta <= 0.0) || theta < -delta_ * (1.0 + 1e-12)) {
      throw DomainError("history: query offset " + std::to_string(theta) + " outside [-delta, 0]");
    }
    const double tau = now_ + theta;
    const auto first = times_.begin() + static_cast<std::ptrdiff_t>(begin_);
    auto it = std::lower_bound(first, times_.end(), tau);
    if (it == times_.end()) { return head(); }
    const std::size_t hi = static_cast<std::size_t>(it - times_.begin());
    // Offsets are reported as time - now; snap round-off so stored samples come back exactly.
    const double snap = 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(now_) + delta_);
    if (std::abs(*it - tau) <= snap || hi == begin_) { return raw_state(hi); }
    if (std::abs(tau - times_[hi - 1]) <= snap) { return raw_state(hi - 1); }
    return interpolate(hi - 1, hi, tau);
  }

  /// Append a new head sampled dt after the current head; offsets shift by -dt.
  HistoryBuffer advance(
    double dt, const Eigen::VectorXd & new_head, const std::optional<Eigen::VectorXd> & head_slope = std::nullopt) const &
  {
    HistoryBuffer copy(*this);
    copy.advance_in_place(dt, new_head, head_slope);
    return copy;
  }

  HistoryBuffer advance(
    double dt, const Eigen::VectorXd & new_head, const std::optional<Eigen::VectorXd> & head_slope = std::nullopt) &&
  {
    advance_in_place(dt, new_head, head_slope);
    return std::move(*this);
  }

  /// Set the slope leaving the current head sample; the incoming slope is kept.
  HistoryBuffer with_head_slope(const Eigen::VectorXd & slope) const &
  {
    HistoryBuffer copy(*this);
    copy.set_head_slope(slope);
    return copy;
  }

  HistoryBuffer with_head_slope(const Eigen::VectorXd & slope) &&
  {
    set_head_slope(slope);
    return std::move(*this);
  }

  /**
   * @brief Sup-norm over the window.
   *
   * Exact for linear interpolation (stored samples plus the interpolated left end).
   * For Hermite segments the midpoints are also probed; the result is then a lower bound.
   */
  double sup_norm() const
  {
    double best = query(-delta_).norm();
    const std::size_t n = size();
    for (std::size_t k = 0; k < n; ++k) {
      const double off = offset(k);
      if (off < -delta_) { continue; }
      best = std::max(best, state(k).norm());
      if (k > 0 && hermite_segment(begin_ + k - 1, begin_ + k)) {
        const double mid = 0.5 * (std::max(offset(k - 1), -delta_) + off);
        best = std::max(best, query(mid).norm());
      }
    }
    return best;
  }

  /// True when every sample in the window is exactly zero.
  bool is_zero() const
  {
    for (std::size_t k = 0; k < size(); ++k) {
      if (!state(k).isZero(0.0)) { return false; }
    }
    return true;
  }

  /// Window samples clipped to [-delta, 0]: the interpolated left end followed by stored samples.
  std::vector<std::pair<double, Eigen::VectorXd>> window() const
  {
    std::vector<std::pair<double, Eigen::VectorXd>> out;
    out.reserve(size() + 1);
    out.emplace_back(-delta_, query(-delta_));
    for (std::size_t k = 0; k < size(); ++k) {
      const double off = offset(k);
      if (off > -delta_) { out.emplace_back(off, Eigen::VectorXd(state(k))); }
    }
    return out;
  }

  /**
   * @brief Trapezoidal integral of `integrand(phi(theta))` over [-delta, 0].
   *
   * Walks the stored samples without allocating a window copy.
   */
  template<typename F>
  double integrate(F && integrand) const
  {
    const std::size_t n = size();
    double prev_off = -delta_;
    double prev_val = integrand(query(-delta_));
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double off = offset(k);
      if (off <= -delta_) { continue; }
      const double val = integrand(state(k));
      acc += 0.5 * (off - prev_off) * (val + prev_val);
      prev_off = off;
      prev_val = val;
    }
    return acc;
  }

  /// Extract the components [start, start + len) of every sample.
  HistoryBuffer block(std::size_t start, std::size_t len) const
  {
    if (start + len > dim_ || len == 0) { throw DomainError("history: block out of range"); }
    HistoryBuffer out;
    out.delta_ = delta_;
    out.interp_ = interp_;
    out.dim_ = len;
    out.now_ = now_;
    const std::size_t n = size();
    out.times_.assign(times_.begin() + static_cast<std::ptrdiff_t>(begin_), times_.end());
    out.data_.resize(n * len);
    out.slopes_.resize(n * len);
    out.out_slopes_.resize(n * len);
    out.has_slope_.assign(has_slope_.begin() + static_cast<std::ptrdiff_t>(begin_), has_slope_.end());
    out.has_out_.assign(has_out_.begin() + static_cast<std::ptrdiff_t>(begin_), has_out_.end());
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t src = (begin_ + k) * dim_ + start;
      std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(src), len, out.data_.begin() + static_cast<std::ptrdiff_t>(k * len));
      std::copy_n(slopes_.begin() + static_cast<std::ptrdiff_t>(src), len, out.slopes_.begin() + static_cast<std::ptrdiff_t>(k * len));
      std::copy_n(out_slopes_.begin() + static_cast<std::ptrdiff_t>(src), len, out.out_slopes_.begin() + static_cast<std::ptrdiff_t>(k * len));
    }
    return out;
  }

private:
  Eigen::VectorXd raw_state(std::size_t abs) const
  {
    return Eigen::Map<const Eigen::VectorXd>(data_.data() + abs * dim_, static_cast<Eigen::Index>(dim_));
  }

  bool hermite_segment(std::size_t a, std::size_t b) const
  {
    return interp_ == Interpolation::cubic_hermite && (has_out_[a] || has_slope_[a]) && (has_slope_[b] || has_out_[b]);
  }

  Eigen::VectorXd interpolate(std::size_t a, std::size_t b, double tau) const
  {
    const double t0 = times_[a];
    const double h = times_[b] - t0;
    const double s = (tau - t0) / h;
    const auto x0 = Eigen::Map<const Eigen::VectorXd>(data_.data() + a * dim_, static_cast<Eigen::Index>(dim_));
    const auto x1 = Eigen::Map<const Eigen::VectorXd>(data_.data() + b * dim_, static_cast<Eigen::Index>(dim_));
    if (!hermite_segment(a, b)) { return (1.0 - s) * x0 + s * x1; }
    const double * p0 = has_out_[a] ? out_slopes_.data() : slopes_.data();
    const double * p1 = has_slope_[b] ? slopes_.data() : out_slopes_.data();
    const auto m0 = Eigen::Map<const Eigen::VectorXd>(p0 + a * dim_, static_cast<Eigen::Index>(dim_));
    const auto m1 = Eigen::Map<const Eigen::VectorXd>(p1 + b * dim_, static_cast<Eigen::Index>(dim_));
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    const double h10 = s3 - 2.0 * s2 + s;
    const double h01 = -2.0 * s3 + 3.0 * s2;
    const double h11 = s3 - s2;
    return h00 * x0 + (h10 * h) * m0 + h01 * x1 + (h11 * h) * m1;
  }

  void push_raw(double time, const Eigen::VectorXd & x, const std::optional<Eigen::VectorXd> & slope)
  {
    times_.push_back(time);
    data_.insert(data_.end(), x.data(), x.data() + dim_);
    if (slope) {
      if (static_cast<std::size_t>(slope->size()) != dim_) { throw DomainError("history: slope dimension mismatch"); }
      slopes_.insert(slopes_.end(), slope->data(), slope->data() + dim_);
      has_slope_.push_back(1);
    } else {
      slopes_.insert(slopes_.end(), dim_, 0.0);
      has_slope_.push_back(0);
    }
    out_slopes_.insert(out_slopes_.end(), dim_, 0.0);
    has_out_.push_back(0);
  }

  void set_head_slope(const Eigen::VectorXd & slope)
  {
    if (static_cast<std::size_t>(slope.size()) != dim_) { throw DomainError("history: slope dimension mismatch"); }
    const std::size_t abs = times_.size() - 1;
    std::copy_n(slope.data(), dim_, out_slopes_.begin() + static_cast<std::ptrdiff_t>(abs * dim_));
    has_out_[abs] = 1;
  }

  void advance_in_place(double dt, const Eigen::VectorXd & x, const std::optional<Eigen::VectorXd> & slope)
  {
    if (!(dt > 0.0)) { throw DomainError("history: advance requires dt > 0"); }
    if (static_cast<std::size_t>(x.size()) != dim_) { throw DomainError("history: head dimension mismatch"); }
    now_ += dt;
    push_raw(now_, x, slope);
    trim();
  }

  // Keep exactly one sample at or before -delta.
  void trim()
  {
    const double left = now_ - delta_;
    while (times_.size() - begin_ >= 2 && times_[begin_ + 1] <= left) { ++begin_; }
    if (begin_ > 64 && begin_ * 2 > times_.size()) {
      const auto b = static_cast<std::ptrdiff_t>(begin_);
      const auto bd = static_cast<std::ptrdiff_t>(begin_ * dim_);
      times_.erase(times_.begin(), times_.begin() + b);
      has_slope_.erase(has_slope_.begin(), has_slope_.begin() + b);
      data_.erase(data_.begin(), data_.begin() + bd);
      slopes_.erase(slopes_.begin(), slopes_.begin() + bd);
      has_out_.erase(has_out_.begin(), has_out_.begin() + b);
      out_slopes_.erase(out_slopes_.begin(), out_slopes_.begin() + bd);
      begin_ = 0;
    }
  }

  double delta_{1.0};
  Interpolation interp_{Interpolation::cubic_hermite};
  std::size_t dim_{0};
  double now_{0.0};
  std::size_t begin_{0};
  std::vector<double> times_;
  std::vector<double> data_;
  std::vector<double> slopes_;
  std::vector<std::uint8_t> has_slope_;
  std::vector<double> out_slopes_;
  std::vector<std::uint8_t> has_out_;
};

/**
 * @brief Read-only delay state, optionally extended past the base buffer's head.
 *
 * Used for Runge-Kutta stages: the view represents phi at time now + lead, whose
 * head is a stage estimate. The gap (now, now + lead] is filled linearly.
 */
class HistoryView
{
public:
  HistoryView(const HistoryBuffer & base)  // NOLINT(google-explicit-constructor)
  : base_(&base) {}

  HistoryView(const HistoryBuffer & base, double lead, const Eigen::VectorXd & head)
  : base_(&base), lead_(lead), head_(&head)
  {
    if (lead < 0.0 || lead > base.delta()) { throw DomainError("history view: lead outside [0, delta]"); }
    if (static_cast<std::size_t>(head.size()) != base.dim()) { throw DomainError("history view: head dimension mismatch"); }
  }

  double delta() const noexcept { return base_->delta(); }
  std::size_t dim() const noexcept { return base_->dim(); }
  const HistoryBuffer & base() const noexcept { return *base_; }

  Eigen::VectorXd head() const { return head_ != nullptr ? Eigen::VectorXd(*head_) : Eigen::VectorXd(base_->head()); }

  Eigen::VectorXd query(double theta) const
  {
    if (head_ == nullptr) { return base_->query(theta); }
    if (!(theta <= 0.0) || theta < -delta() * (1.0 + 1e-12)) {
      throw DomainError("history view: query offset outside [-delta, 0]");
    }
    if (theta == 0.0) { return *head_; }
    const double tau = theta + lead_;
    if (tau <= 0.0) { return base_->query(std::max(tau, -delta())); }
    const double s = tau / lead_;
    return (1.0 - s) * Eigen::VectorXd(base_->head()) + s * *head_;
  }

private:
  const HistoryBuffer * base_;
  double lead_{0.0};
  const Eigen::VectorXd * head_{nullptr};
};

/// Partition of the stacked state into p subsystems plus their interconnection graph.
class SubsystemLayout
{
public:
  SubsystemLayout() = default;

  /// Complete graph over `dims.size()` subsystems.
  explicit SubsystemLayout(std::vector<std::size_t> dims)
  : SubsystemLayout(dims, complete_graph(dims.size())) {}

  SubsystemLayout(std::vector<std::size_t> dims, std::vector<std::vector<bool>> adjacency)
  : dims_(std::move(dims)), adjacency_(std::move(adjacency))
  {
    if (dims_.empty()) { throw DomainError("layout: need at least one subsystem"); }
    if (adjacency_.size() != dims_.size()) { throw DomainError("layout: adjacency size mismatch"); }
    std::size_t acc = 0;
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      if (dims_[i] == 0) { throw DomainError("layout: subsystem dimension must be positive"); }
      if (adjacency_[i].size() != dims_.size()) { throw DomainError("layout: adjacency must be square"); }
      offsets_.push_back(acc);
      acc += dims_[i];
    }
    total_ = acc;
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      for (std::size_t j = 0; j < dims_.size(); ++j) {
        if (i != j && adjacency_[i][j] != adjacency_[j][i]) { throw DomainError("layout: adjacency must be symmetric"); }
      }
    }
  }

  static std::vector<std::vector<bool>> complete_graph(std::size_t p)
  {
    std::vector<std::vector<bool>> adj(p, std::vector<bool>(p, true));
    for (std::size_t i = 0; i < p; ++i) { adj[i][i] = false; }
    return adj;
  }

  std::size_t count() const noexcept { return dims_.size(); }
  std::size_t total_dim() const noexcept { return total_; }
  std::size_t dim(std::size_t i) const { check(i); return dims_[i]; }
  std::size_t offset(std::size_t i) const { check(i); return offsets_[i]; }

  /// Diagonal entries are ignored.
  bool connected(std::size_t i, std::size_t j) const { check(i); check(j); return i != j && adjacency_[i][j]; }

  std::vector<std::size_t> neighbors(std::size_t i) const
  {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < count(); ++j) {
      if (connected(i, j)) { out.push_back(j); }
    }
    return out;
  }

  void check(std::size_t i) const
  {
    if (i >= dims_.size()) { throw DomainError("layout: subsystem index " + std::to_string(i) + " out of range"); }
  }

private:
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> offsets_;
  std::vector<std::vector<bool>> adjacency_;
  std::size_t total_{0};
};

/// phi_i: the history of subsystem i (0-based).
inline HistoryBuffer sub_view(const HistoryBuffer & buf, const SubsystemLayout & layout, std::size_t i)
{
  layout.check(i);
  if (buf.dim() != layout.total_dim()) { throw DomainError("sub_view: buffer dimension does not match layout"); }
  return buf.block(layout.offset(i), layout.dim(i));
}

}  // namespace delayguard
