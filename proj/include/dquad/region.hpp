#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dquad/errors.hpp"

namespace dquad {

/// Axis-aligned box [lo_0, hi_0] x ... x [lo_{d-1}, hi_{d-1}] with strictly
/// positive extent on every axis.
class HyperRect {
 public:
  HyperRect(std::vector<double> lo, std::vector<double> hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
    if (lo_.empty() || lo_.size() != hi_.size()) {
      throw ContractViolation("HyperRect: lo/hi must be non-empty and of equal length");
    }
    for (std::size_t i = 0; i < lo_.size(); ++i) {
      if (!(lo_[i] < hi_[i]) || !std::isfinite(lo_[i]) || !std::isfinite(hi_[i])) {
        throw ContractViolation("HyperRect: need finite lo < hi on axis " + std::to_string(i));
      }
    }
  }

  static HyperRect unit_cube(int dim) {
    if (dim < 1) throw ContractViolation("HyperRect: dimension must be >= 1");
    return {std::vector<double>(static_cast<std::size_t>(dim), 0.0),
            std::vector<double>(static_cast<std::size_t>(dim), 1.0)};
  }

  [[nodiscard]] int dim() const noexcept { return static_cast<int>(lo_.size()); }
  [[nodiscard]] std::span<const double> lo() const noexcept { return lo_; }
  [[nodiscard]] std::span<const double> hi() const noexcept { return hi_; }
  [[nodiscard]] double lo(int axis) const { return lo_[static_cast<std::size_t>(axis)]; }
  [[nodiscard]] double hi(int axis) const { return hi_[static_cast<std::size_t>(axis)]; }
  [[nodiscard]] double extent(int axis) const { return hi(axis) - lo(axis); }

  friend bool operator==(const HyperRect&, const HyperRect&) = default;

 private:
  std::vector<double> lo_;
  std::vector<double> hi_;
};

[[nodiscard]] inline double volume(const HyperRect& rect) noexcept {
  double v = 1.0;
  for (int i = 0; i < rect.dim(); ++i) v *= rect.extent(i);
  return v;
}

/// lo + 0.5 (hi - lo); avoids overflow of lo + hi.
[[nodiscard]] inline double midpoint(double lo, double hi) noexcept { return lo + 0.5 * (hi - lo); }

/// Bisects `rect` at the midpoint of `axis`.
[[nodiscard]] inline std::pair<HyperRect, HyperRect> split(const HyperRect& rect, int axis) {
  if (axis < 0 || axis >= rect.dim()) {
    throw ContractViolation("split: axis " + std::to_string(axis) + " out of range for dimension " +
                            std::to_string(rect.dim()));
  }
  std::vector<double> lo(rect.lo().begin(), rect.lo().end());
  std::vector<double> hi(rect.hi().begin(), rect.hi().end());
  const auto a = static_cast<std::size_t>(axis);
  const double mid = midpoint(lo[a], hi[a]);
  std::vector<double> left_hi = hi;
  left_hi[a] = mid;
  std::vector<double> right_lo = lo;
  right_lo[a] = mid;
  return {HyperRect(std::move(lo), std::move(left_hi)), HyperRect(std::move(right_lo), std::move(hi))};
}

[[nodiscard]] inline int longest_axis(const HyperRect& rect) noexcept {
  int best = 0;
  for (int i = 1; i < rect.dim(); ++i) {
    if (rect.extent(i) > rect.extent(best)) best = i;
  }
  return best;
}

/// Greedy partition into exactly k boxes: repeatedly bisect the largest box
/// (first one on ties) along its longest axis (lowest axis on ties). The two
/// children take the parent's slot in order, so the output is spatially ordered.
[[nodiscard]] inline std::vector<HyperRect> uniform_partition(const HyperRect& domain, std::size_t k) {
  if (k == 0) throw ContractViolation("uniform_partition: k must be >= 1");
  std::vector<HyperRect> parts{domain};
  parts.reserve(k);
  std::vector<double> vols{volume(domain)};
  while (parts.size() < k) {
    std::size_t largest = 0;
    for (std::size_t i = 1; i < parts.size(); ++i) {
      if (vols[i] > vols[largest]) largest = i;
    }
    auto [left, right] = split(parts[largest], longest_axis(parts[largest]));
    const double vl = volume(left);
    const double vr = volume(right);
    parts[largest] = std::move(left);
    vols[largest] = vl;
    parts.insert(parts.begin() + static_cast<std::ptrdiff_t>(largest) + 1, std::move(right));
    vols.insert(vols.begin() + static_cast<std::ptrdiff_t>(largest) + 1, vr);
  }
  return parts;
}

/// Row view of one region, materialized on demand.
struct RegionRecord {
  HyperRect rect;
  double integral = 0.0;
  double error = 0.0;
  std::optional<int> split_axis;
};

/// Columnar batch of regions: one array per bound coordinate plus the
/// per-region estimates. Single owner; move it between workers.
///
/// split_axis < 0 marks a region whose estimates were inherited from its
/// parent rather than produced by a rule evaluation.
class RegionStore {
 public:
  explicit RegionStore(int dim) : lower_(checked_dim(dim)), upper_(static_cast<std::size_t>(dim)) {}

  [[nodiscard]] int dim() const noexcept { return static_cast<int>(lower_.size()); }
  [[nodiscard]] std::size_t size() const noexcept { return integral_.size(); }
  [[nodiscard]] bool empty() const noexcept { return integral_.empty(); }

  void reserve(std::size_t n) {
    for (auto& c : lower_) c.reserve(n);
    for (auto& c : upper_) c.reserve(n);
    integral_.reserve(n);
    error_.reserve(n);
    split_axis_.reserve(n);
    active_.reserve(n);
  }

  void clear() noexcept {
    for (auto& c : lower_) c.clear();
    for (auto& c : upper_) c.clear();
    integral_.clear();
    error_.clear();
    split_axis_.clear();
    active_.clear();
  }

  void push_back(const HyperRect& rect, double integral = 0.0, double error = 0.0, int split_axis = -1) {
    if (rect.dim() != dim()) throw ContractViolation("RegionStore: dimension mismatch on append");
    for (int a = 0; a < dim(); ++a) {
      lower_[static_cast<std::size_t>(a)].push_back(rect.lo(a));
      upper_[static_cast<std::size_t>(a)].push_back(rect.hi(a));
    }
    integral_.push_back(integral);
    error_.push_back(error);
    split_axis_.push_back(split_axis);
    active_.push_back(1);
  }

  /// Appends raw bounds (lo_0, hi_0, lo_1, hi_1, ...) without building a HyperRect.
  void push_back_bounds(std::span<const double> lo_hi_pairs, double integral, double error,
                        int split_axis = -1) {
    for (int a = 0; a < dim(); ++a) {
      const auto ua = static_cast<std::size_t>(a);
      lower_[ua].push_back(lo_hi_pairs[2 * ua]);
      upper_[ua].push_back(lo_hi_pairs[2 * ua + 1]);
    }
    integral_.push_back(integral);
    error_.push_back(error);
    split_axis_.push_back(split_axis);
    active_.push_back(1);
  }

  void append(const RegionStore& other) {
    if (other.dim() != dim()) throw ContractViolation("RegionStore: dimension mismatch on append");
    for (std::size_t a = 0; a < lower_.size(); ++a) {
      lower_[a].insert(lower_[a].end(), other.lower_[a].begin(), other.lower_[a].end());
      upper_[a].insert(upper_[a].end(), other.upper_[a].begin(), other.upper_[a].end());
    }
    integral_.insert(integral_.end(), other.integral_.begin(), other.integral_.end());
    error_.insert(error_.end(), other.error_.begin(), other.error_.end());
    split_axis_.insert(split_axis_.end(), other.split_axis_.begin(), other.split_axis_.end());
    active_.insert(active_.end(), other.active_.begin(), other.active_.end());
  }

  [[nodiscard]] std::span<const double> lower(int axis) const { return lower_[static_cast<std::size_t>(axis)]; }
  [[nodiscard]] std::span<const double> upper(int axis) const { return upper_[static_cast<std::size_t>(axis)]; }
  [[nodiscard]] std::span<const double> integral() const noexcept { return integral_; }
  [[nodiscard]] std::span<const double> error() const noexcept { return error_; }
  [[nodiscard]] std::span<const std::int32_t> split_axis() const noexcept { return split_axis_; }
  [[nodiscard]] std::span<const std::uint8_t> active() const noexcept { return active_; }

  [[nodiscard]] bool evaluated(std::size_t i) const { return split_axis_[i] >= 0; }

  void set_estimate(std::size_t i, double integral, double error, int split_axis) {
    if (split_axis < 0 || split_axis >= dim()) {
      throw ContractViolation("RegionStore: split axis out of range");
    }
    integral_[i] = integral;
    error_[i] = error;
    split_axis_[i] = split_axis;
  }

  void set_active(std::size_t i, bool on) { active_[i] = on ? 1 : 0; }

  [[nodiscard]] HyperRect rect(std::size_t i) const {
    std::vector<double> lo(lower_.size());
    std::vector<double> hi(lower_.size());
    for (std::size_t a = 0; a < lower_.size(); ++a) {
      lo[a] = lower_[a][i];
      hi[a] = upper_[a][i];
    }
    return {std::move(lo), std::move(hi)};
  }

  /// Writes the centre and half-widths of region i into the given buffers.
  void center_halfwidth(std::size_t i, std::span<double> center, std::span<double> half) const {
    for (std::size_t a = 0; a < lower_.size(); ++a) {
      const double lo = lower_[a][i];
      const double hi = upper_[a][i];
      half[a] = 0.5 * (hi - lo);
      center[a] = lo + half[a];
    }
  }

  [[nodiscard]] double region_volume(std::size_t i) const {
    double v = 1.0;
    for (std::size_t a = 0; a < lower_.size(); ++a) v *= upper_[a][i] - lower_[a][i];
    return v;
  }

  [[nodiscard]] RegionRecord record(std::size_t i) const {
    RegionRecord r{rect(i), integral_[i], error_[i], std::nullopt};
    if (split_axis_[i] >= 0) r.split_axis = split_axis_[i];
    return r;
  }

  /// Drops every inactive region, preserving the order of the rest.
  /// Returns the number removed.
  std::size_t compact() {
    std::size_t out = 0;
    const std::size_t n = size();
    for (std::size_t i = 0; i < n; ++i) {
      if (!active_[i]) continue;
      if (out != i) move_row(i, out);
      ++out;
    }
    resize(out);
    return n - out;
  }

  /// Moves the regions at `indices` into a new store (in the given order) and
  /// removes them from this one.
  [[nodiscard]] RegionStore extract(std::span<const std::size_t> indices) {
    RegionStore taken(dim());
    taken.reserve(indices.size());
    std::vector<double> bounds(2 * lower_.size());
    for (std::size_t i : indices) {
      if (i >= size()) throw ContractViolation("RegionStore::extract: index out of range");
      if (!active_[i]) throw ContractViolation("RegionStore::extract: duplicate index");
      for (std::size_t a = 0; a < lower_.size(); ++a) {
        bounds[2 * a] = lower_[a][i];
        bounds[2 * a + 1] = upper_[a][i];
      }
      taken.push_back_bounds(bounds, integral_[i], error_[i], split_axis_[i]);
      active_[i] = 0;
    }
    compact();
    return taken;
  }

 private:
  static std::size_t checked_dim(int dim) {
    if (dim < 1) throw ContractViolation("RegionStore: dimension must be >= 1");
    return static_cast<std::size_t>(dim);
  }

  void move_row(std::size_t from, std::size_t to) {
    for (std::size_t a = 0; a < lower_.size(); ++a) {
      lower_[a][to] = lower_[a][from];
      upper_[a][to] = upper_[a][from];
    }
    integral_[to] = integral_[from];
    error_[to] = error_[from];
    split_axis_[to] = split_axis_[from];
    active_[to] = active_[from];
  }

  void resize(std::size_t n) {
    for (auto& c : lower_) c.resize(n);
    for (auto& c : upper_) c.resize(n);
    integral_.resize(n);
    error_.resize(n);
    split_axis_.resize(n);
    active_.resize(n);
  }

  std::vector<std::vector<double>> lower_;
  std::vector<std::vector<double>> upper_;
  std::vector<double> integral_;
  std::vector<double> error_;
  std::vector<std::int32_t> split_axis_;
  std::vector<std::uint8_t> active_;
};

}  // namespace dquad
