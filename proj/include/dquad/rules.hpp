#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dquad/errors.hpp"
#include "dquad/region.hpp"

namespace dquad {

/// Anything callable as `double f(std::span<const double> x)`.
template <class F>
concept Integrand = std::invocable<F&, std::span<const double>> &&
                    std::convertible_to<std::invoke_result_t<F&, std::span<const double>>, double>;

enum class RuleFamily { fully_symmetric, tensor_gauss_kronrod };

/// One generator of a fully symmetric rule. `weight` and `embedded_weight` are
/// per-node weights on the reference cube [-1,1]^d; every node of the orbit
/// (all distinct coordinate permutations and sign flips of non-zero entries)
/// shares them.
struct Orbit {
  std::vector<double> generator;
  double weight = 0.0;
  double embedded_weight = 0.0;
  std::size_t size = 0;
};

/// Number of distinct nodes produced by permuting and sign-flipping `generator`.
[[nodiscard]] inline std::size_t orbit_size(std::span<const double> generator) {
  std::vector<double> g(generator.size());
  std::transform(generator.begin(), generator.end(), g.begin(), [](double v) { return std::fabs(v); });
  std::sort(g.begin(), g.end());
  std::size_t perms = 0;
  do {
    ++perms;
  } while (std::next_permutation(g.begin(), g.end()));
  const auto nonzero = static_cast<std::size_t>(std::count_if(g.begin(), g.end(), [](double v) { return v != 0.0; }));
  return perms << nonzero;
}

namespace detail {

// 7-point Gauss / 15-point Kronrod abscissae and weights on [-1,1] (QUADPACK qk15).
inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
// Gauss weights for kKronrodNodes[1], [3], [5], [7].
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

}  // namespace detail

/// Immutable cubature rule on the reference cube [-1,1]^d.
///
/// Fully symmetric tables are expanded to an explicit node list grouped by
/// orbit. Two on-axis orbits are required: they supply the per-axis fourth
/// difference used to pick the split axis. When the table also has a centre
/// node, degree-3 and degree-1 companion rules are derived on the same nodes
/// and drive the null-rule safeguard in estimate_error().
///
/// Tensor Gauss-Kronrod tables keep only the 15 one-dimensional nodes; the
/// 15^d tensor nodes are generated while evaluating.
class RuleTable {
 public:
  struct AxisProbe {
    std::size_t inner_orbit = 0;
    std::size_t outer_orbit = 0;
    double inner = 0.0;  // on-axis coordinate of the inner pair
    double outer = 0.0;
    double ratio = 0.0;  // inner^2 / outer^2, cancels the second-derivative term
  };

  /// Builds and validates a fully symmetric table. Throws FormatError when the
  /// degree-0 moment is off by more than 1e-13 relative or the probe orbits
  /// are missing.
  static RuleTable fully_symmetric(int dim, std::vector<Orbit> orbits, int degree, int embedded_degree,
                                   std::string name = "custom") {
    if (dim < 1) throw ContractViolation("RuleTable: dimension must be >= 1");
    RuleTable t;
    t.dim_ = dim;
    t.family_ = RuleFamily::fully_symmetric;
    t.degree_ = degree;
    t.embedded_degree_ = embedded_degree;
    t.name_ = std::move(name);
    const auto d = static_cast<std::size_t>(dim);
    for (auto& o : orbits) {
      if (o.generator.size() != d) throw FormatError("RuleTable: generator length differs from dimension");
      for (auto& g : o.generator) g = std::fabs(g);
      if (std::any_of(o.generator.begin(), o.generator.end(), [](double g) { return g > 1.0; })) {
        throw FormatError("RuleTable: generator coordinate outside the reference cube");
      }
      o.size = orbit_size(o.generator);
    }
    t.orbits_ = std::move(orbits);
    t.expand_nodes();
    t.check_volume_moment();
    t.locate_probes();
    t.derive_cascade();
    return t;
  }

  [[nodiscard]] int dim() const noexcept { return dim_; }
  [[nodiscard]] RuleFamily family() const noexcept { return family_; }
  [[nodiscard]] const std::string& name() const noexcept { return name_; }
  [[nodiscard]] int degree() const noexcept { return degree_; }
  [[nodiscard]] int embedded_degree() const noexcept { return embedded_degree_; }
  [[nodiscard]] std::size_t node_count() const noexcept { return node_count_; }
  [[nodiscard]] std::span<const Orbit> orbits() const noexcept { return orbits_; }

  // Fully symmetric layout: nodes of orbit k occupy [orbit_offset(k), orbit_offset(k+1)).
  [[nodiscard]] std::span<const double> nodes() const noexcept { return nodes_; }
  [[nodiscard]] std::size_t orbit_offset(std::size_t k) const { return orbit_offsets_[k]; }
  [[nodiscard]] const AxisProbe& probe() const noexcept { return probe_; }
  [[nodiscard]] std::size_t center_node() const noexcept { return center_node_; }
  /// Node index of (sign * coordinate) e_axis for the inner (which=0) or outer (which=1) probe orbit.
  [[nodiscard]] std::size_t axis_node(int axis, int which, bool positive) const {
    return axis_nodes_[(static_cast<std::size_t>(axis) * 2 + static_cast<std::size_t>(which)) * 2 + (positive ? 0 : 1)];
  }
  [[nodiscard]] bool has_cascade() const noexcept { return !lower_weights_.empty(); }
  [[nodiscard]] std::span<const double> lower_weights() const noexcept { return lower_weights_; }
  [[nodiscard]] std::span<const double> lowest_weights() const noexcept { return lowest_weights_; }

  // Tensor Gauss-Kronrod layout.
  [[nodiscard]] std::span<const double> gk_nodes() const noexcept { return gk_nodes_; }
  [[nodiscard]] std::span<const double> gk_kronrod_weights() const noexcept { return gk_kronrod_; }
  [[nodiscard]] std::span<const double> gk_gauss_weights() const noexcept { return gk_gauss_; }

  static RuleTable tensor_gauss_kronrod(int dim) {
    RuleTable t;
    t.dim_ = dim;
    t.family_ = RuleFamily::tensor_gauss_kronrod;
    t.degree_ = 23;
    t.embedded_degree_ = 13;
    t.name_ = "gk-tensor";
    for (int side = -1; side <= 1; side += 2) {
      for (std::size_t j = 0; j < 7; ++j) {
        const std::size_t k = side < 0 ? j : 6 - j;
        t.gk_nodes_.push_back(side * detail::kKronrodNodes[k]);
        t.gk_kronrod_.push_back(detail::kKronrodWeights[k]);
        t.gk_gauss_.push_back(k % 2 == 1 ? detail::kGaussWeights[k / 2] : 0.0);
      }
      if (side < 0) {
        t.gk_nodes_.push_back(0.0);
        t.gk_kronrod_.push_back(detail::kKronrodWeights[7]);
        t.gk_gauss_.push_back(detail::kGaussWeights[3]);
      }
    }
    t.node_count_ = 1;
    for (int i = 0; i < dim; ++i) t.node_count_ *= t.gk_nodes_.size();
    return t;
  }

 private:
  RuleTable() = default;

  void expand_nodes() {
    const auto d = static_cast<std::size_t>(dim_);
    orbit_offsets_.assign(1, 0);
    std::vector<double> g(d);
    for (const auto& o : orbits_) {
      g = o.generator;
      std::sort(g.begin(), g.end());
      do {
        std::vector<std::size_t> nz;
        for (std::size_t i = 0; i < d; ++i) {
          if (g[i] != 0.0) nz.push_back(i);
        }
        const std::size_t combos = std::size_t{1} << nz.size();
        for (std::size_t mask = 0; mask < combos; ++mask) {
          for (std::size_t i = 0; i < d; ++i) nodes_.push_back(g[i]);
          double* node = nodes_.data() + nodes_.size() - d;
          for (std::size_t b = 0; b < nz.size(); ++b) {
            if (mask & (std::size_t{1} << b)) node[nz[b]] = -node[nz[b]];
          }
        }
      } while (std::next_permutation(g.begin(), g.end()));
      orbit_offsets_.push_back(nodes_.size() / d);
    }
    node_count_ = nodes_.size() / d;
  }

  void check_volume_moment() const {
    double s = 0.0;
    for (const auto& o : orbits_) s += o.weight * static_cast<double>(o.size);
    const double ref = std::ldexp(1.0, dim_);
    if (std::fabs(s - ref) > 1e-13 * ref) {
      throw FormatError("RuleTable: weights do not integrate 1 exactly (sum " + std::to_string(s) + ")");
    }
  }

  [[nodiscard]] static std::size_t count_nonzero(const Orbit& o) {
    return static_cast<std::size_t>(std::count_if(o.generator.begin(), o.generator.end(), [](double v) { return v != 0.0; }));
  }

  void locate_probes() {
    const auto d = static_cast<std::size_t>(dim_);
    std::vector<std::size_t> axis_orbits;
    bool has_center = false;
    for (std::size_t k = 0; k < orbits_.size(); ++k) {
      const auto nnz = count_nonzero(orbits_[k]);
      if (nnz == 0) {
        has_center = true;
        center_node_ = orbit_offsets_[k];
      } else if (nnz == 1) {
        axis_orbits.push_back(k);
      }
    }
    auto coord = [&](std::size_t k) { return *std::max_element(orbits_[k].generator.begin(), orbits_[k].generator.end()); };
    std::sort(axis_orbits.begin(), axis_orbits.end(), [&](std::size_t a, std::size_t b) { return coord(a) < coord(b); });
    axis_orbits.erase(std::unique(axis_orbits.begin(), axis_orbits.end(),
                                  [&](std::size_t a, std::size_t b) { return coord(a) == coord(b); }),
                      axis_orbits.end());
    if (!has_center || axis_orbits.size() < 2) {
      throw FormatError("RuleTable: need a centre node and two on-axis orbits for axis selection");
    }
    probe_.inner_orbit = axis_orbits[0];
    probe_.outer_orbit = axis_orbits[1];
    probe_.inner = coord(axis_orbits[0]);
    probe_.outer = coord(axis_orbits[1]);
    probe_.ratio = (probe_.inner * probe_.inner) / (probe_.outer * probe_.outer);

    axis_nodes_.assign(d * 4, 0);
    const std::array<std::size_t, 2> probe_orbits{probe_.inner_orbit, probe_.outer_orbit};
    for (std::size_t which = 0; which < 2; ++which) {
      const std::size_t k = probe_orbits[which];
      for (std::size_t n = orbit_offsets_[k]; n < orbit_offsets_[k + 1]; ++n) {
        const double* node = nodes_.data() + n * d;
        for (std::size_t a = 0; a < d; ++a) {
          if (node[a] != 0.0) axis_nodes_[(a * 2 + which) * 2 + (node[a] > 0 ? 0 : 1)] = n;
        }
      }
    }
  }

  // Degree-3 and degree-1 companions built on existing nodes: the centre alone
  // (midpoint rule), and the centre plus the "all coordinates equal" orbit (or,
  // failing that, the inner axis orbit) fitted to the constant and x_1^2 moments.
  void derive_cascade() {
    const double ref = std::ldexp(1.0, dim_);
    std::size_t center = orbits_.size();
    std::size_t partner = orbits_.size();
    for (std::size_t k = 0; k < orbits_.size(); ++k) {
      const auto& g = orbits_[k].generator;
      if (count_nonzero(orbits_[k]) == 0) center = k;
      if (g[0] != 0.0 && std::all_of(g.begin(), g.end(), [&](double v) { return v == g[0]; }) && dim_ > 1) partner = k;
    }
    if (center == orbits_.size()) return;
    double second_moment_per_node_weight = 0.0;  // sum over partner nodes of x_1^2
    if (partner == orbits_.size()) partner = probe_.inner_orbit;
    const double g = *std::max_element(orbits_[partner].generator.begin(), orbits_[partner].generator.end());
    const double nodes_with_x1 = partner == probe_.inner_orbit ? 2.0 : static_cast<double>(orbits_[partner].size);
    second_moment_per_node_weight = nodes_with_x1 * g * g;
    const double w_partner = (ref / 3.0) / second_moment_per_node_weight;
    const double w_center = ref - w_partner * static_cast<double>(orbits_[partner].size);
    lower_weights_.assign(orbits_.size(), 0.0);
    lowest_weights_.assign(orbits_.size(), 0.0);
    lower_weights_[center] = w_center;
    lower_weights_[partner] = w_partner;
    lowest_weights_[center] = ref;
  }

  int dim_ = 0;
  RuleFamily family_ = RuleFamily::fully_symmetric;
  int degree_ = 0;
  int embedded_degree_ = 0;
  std::string name_;
  std::size_t node_count_ = 0;
  std::vector<Orbit> orbits_;
  std::vector<double> nodes_;
  std::vector<std::size_t> orbit_offsets_;
  AxisProbe probe_;
  std::size_t center_node_ = 0;
  std::vector<std::size_t> axis_nodes_;
  std::vector<double> lower_weights_;
  std::vector<double> lowest_weights_;
  std::vector<double> gk_nodes_;
  std::vector<double> gk_kronrod_;
  std::vector<double> gk_gauss_;
};

inline constexpr int kGenzMalikMinDim = 2;
inline constexpr int kGenzMalikMaxDim = 13;
inline constexpr int kGaussKronrodMaxDim = 6;

/// Degree-7 Genz-Malik rule with its embedded degree-5 companion,
/// 2^d + 2d^2 + 2d + 1 nodes.
[[nodiscard]] inline RuleTable build_gm_rule(int d) {
  if (d < kGenzMalikMinDim || d > kGenzMalikMaxDim) {
    throw UnsupportedDimension("gm", d, "supported range is 2..13; use gk-tensor for d = 1");
  }
  const double dd = d;
  const double ref = std::ldexp(1.0, d);
  const double l2 = std::sqrt(9.0 / 70.0);
  const double l3 = std::sqrt(9.0 / 10.0);
  const double l4 = std::sqrt(9.0 / 10.0);
  const double l5 = std::sqrt(9.0 / 19.0);

  // Weights below are normalised to unit volume; the reference cube has volume 2^d.
  const double w1 = (12824.0 - (9120.0 - 400.0 * dd) * dd) / 19683.0;
  const double w2 = 980.0 / 6561.0;
  const double w3 = (1820.0 - 400.0 * dd) / 19683.0;
  const double w4 = 200.0 / 19683.0;
  const double w5 = 6859.0 / 19683.0 / ref;
  const double e1 = (729.0 - 50.0 * (19.0 - dd) * dd) / 729.0;
  const double e2 = 245.0 / 486.0;
  const double e3 = (265.0 - 100.0 * dd) / 1458.0;
  const double e4 = 25.0 / 729.0;

  const auto n = static_cast<std::size_t>(d);
  auto axis = [n](double v) {
    std::vector<double> g(n, 0.0);
    g[0] = v;
    return g;
  };
  std::vector<double> pair(n, 0.0);
  pair[0] = pair[1] = l4;

  std::vector<Orbit> orbits;
  orbits.push_back({std::vector<double>(n, 0.0), ref * w1, ref * e1, 0});
  orbits.push_back({axis(l2), ref * w2, ref * e2, 0});
  orbits.push_back({axis(l3), ref * w3, ref * e3, 0});
  orbits.push_back({pair, ref * w4, ref * e4, 0});
  orbits.push_back({std::vector<double>(n, l5), ref * w5, 0.0, 0});
  return RuleTable::fully_symmetric(d, std::move(orbits), 7, 5, "gm");
}

/// Tensor product of the 7-point Gauss / 15-point Kronrod pair. Capped at d = 6:
/// the 15^d node count is prohibitive beyond that.
[[nodiscard]] inline RuleTable build_gk_tensor_rule(int d) {
  if (d < 1 || d > kGaussKronrodMaxDim) {
    throw UnsupportedDimension("gk-tensor", d, "tensor Gauss-Kronrod is capped at d <= 6");
  }
  return RuleTable::tensor_gauss_kronrod(d);
}

enum class RuleId { gm, gk_tensor };

[[nodiscard]] inline std::string to_string(RuleId id) { return id == RuleId::gm ? "gm" : "gk-tensor"; }

/// Rule used for `id` in dimension d. The Genz-Malik family has no d = 1
/// member, so gm delegates to the one-dimensional Gauss-Kronrod pair there.
[[nodiscard]] inline RuleTable make_rule(RuleId id, int d) {
  if (id == RuleId::gm && d == 1) return build_gk_tensor_rule(1);
  return id == RuleId::gm ? build_gm_rule(d) : build_gk_tensor_rule(d);
}

struct RuleEvaluation {
  double integral = 0.0;
  double error = 0.0;
  std::vector<double> axis_scores;
  std::size_t f_evals = 0;
  bool non_finite = false;
};

/// Rule values on one region, already scaled to the region volume.
struct EmbeddedEstimates {
  double main = 0.0;
  double embedded = 0.0;
  double lower = 0.0;   // degree-3 companion
  double lowest = 0.0;  // degree-1 companion
  double noise = 0.0;   // round-off level of `main`
  bool has_cascade = false;
};

/// Error of the main rule on one region.
///
/// The base quantity is e1 = |main - embedded|. With companion rules present,
/// e2 = |embedded - lower| and e3 = |lower - lowest| must also shrink
/// (e1 < e2 and e2 < e3) for the estimate to be trusted; otherwise the region
/// is not yet in the asymptotic regime and the largest difference is
/// reported. A difference at round-off level means the rules agree exactly,
/// which happens for polynomials below the embedded degree.
[[nodiscard]] inline double estimate_error(const EmbeddedEstimates& v) noexcept {
  const double e1 = std::fabs(v.main - v.embedded);
  if (!v.has_cascade || e1 <= v.noise) return e1;
  const double e2 = std::fabs(v.embedded - v.lower);
  const double e3 = std::fabs(v.lower - v.lowest);
  const bool decreasing = e1 < e2 && e2 < e3;
  return decreasing ? e1 : std::max({e1, e2, e3});
}

/// Argmax of the axis scores, lowest index on ties.
[[nodiscard]] inline int select_axis(std::span<const double> axis_scores) noexcept {
  int best = 0;
  for (std::size_t i = 1; i < axis_scores.size(); ++i) {
    if (axis_scores[i] > axis_scores[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

[[nodiscard]] inline int select_axis(const RuleEvaluation& eval) noexcept { return select_axis(eval.axis_scores); }

/// Error reported for a region where the integrand produced NaN or Inf,
/// multiplied by the region volume.
inline constexpr double kNonFiniteErrorPerVolume = 1e150;

/// Reusable evaluator: holds scratch buffers so batch evaluation does not
/// allocate per region. Not shareable between threads; the table is.
class RuleEvaluator {
 public:
  explicit RuleEvaluator(const RuleTable& table)
      : table_(&table),
        point_(static_cast<std::size_t>(table.dim())),
        center_(static_cast<std::size_t>(table.dim())),
        half_(static_cast<std::size_t>(table.dim())),
        orbit_sums_(table.orbits().size()),
        orbit_abs_(table.orbits().size()),
        values_(table.family() == RuleFamily::fully_symmetric ? table.node_count() : 0),
        index_(static_cast<std::size_t>(table.dim())) {}

  [[nodiscard]] const RuleTable& table() const noexcept { return *table_; }

  template <Integrand F>
  void evaluate(std::span<const double> center, std::span<const double> half, F& f, RuleEvaluation& out) {
    const auto d = static_cast<std::size_t>(table_->dim());
    if (center.size() != d || half.size() != d) throw ContractViolation("apply_rule: dimension mismatch");
    double vol = 1.0;
    for (std::size_t a = 0; a < d; ++a) vol *= 2.0 * half[a];
    out.axis_scores.assign(d, 0.0);
    out.non_finite = false;
    out.f_evals = table_->node_count();
    if (table_->family() == RuleFamily::fully_symmetric) {
      symmetric(center, half, vol, f, out);
    } else {
      tensor(center, half, vol, f, out);
    }
    if (out.non_finite) {
      out.integral = 0.0;
      out.error = kNonFiniteErrorPerVolume * vol;
      for (std::size_t a = 0; a < d; ++a) out.axis_scores[a] = half[a];
    }
  }

  template <Integrand F>
  RuleEvaluation evaluate(const HyperRect& rect, F& f) {
    if (rect.dim() != table_->dim()) throw ContractViolation("apply_rule: rect/table dimension mismatch");
    for (int a = 0; a < rect.dim(); ++a) {
      const auto ua = static_cast<std::size_t>(a);
      half_[ua] = 0.5 * rect.extent(a);
      center_[ua] = rect.lo(a) + half_[ua];
    }
    RuleEvaluation out;
    evaluate(center_, half_, f, out);
    return out;
  }

 private:
  template <Integrand F>
  void symmetric(std::span<const double> center, std::span<const double> half, double vol, F& f,
                 RuleEvaluation& out) {
    const RuleTable& t = *table_;
    const auto d = static_cast<std::size_t>(t.dim());
    const auto nodes = t.nodes();
    const auto orbits = t.orbits();
    for (std::size_t k = 0; k < orbits.size(); ++k) {
      double s = 0.0;
      double sa = 0.0;
      for (std::size_t n = t.orbit_offset(k); n < t.orbit_offset(k + 1); ++n) {
        const double* node = nodes.data() + n * d;
        for (std::size_t a = 0; a < d; ++a) point_[a] = center[a] + half[a] * node[a];
        const double v = static_cast<double>(f(std::span<const double>(point_)));
        if (!std::isfinite(v)) out.non_finite = true;
        values_[n] = v;
        s += v;
        sa += std::fabs(v);
      }
      orbit_sums_[k] = s;
      orbit_abs_[k] = sa;
    }
    if (out.non_finite) return;

    const double scale = vol / std::ldexp(1.0, t.dim());
    EmbeddedEstimates est;
    double noise = 0.0;
    for (std::size_t k = 0; k < orbits.size(); ++k) {
      est.main += orbits[k].weight * orbit_sums_[k];
      est.embedded += orbits[k].embedded_weight * orbit_sums_[k];
      noise += std::fabs(orbits[k].weight) * orbit_abs_[k];
    }
    if (t.has_cascade()) {
      est.has_cascade = true;
      for (std::size_t k = 0; k < orbits.size(); ++k) {
        est.lower += t.lower_weights()[k] * orbit_sums_[k];
        est.lowest += t.lowest_weights()[k] * orbit_sums_[k];
      }
    }
    est.main *= scale;
    est.embedded *= scale;
    est.lower *= scale;
    est.lowest *= scale;
    est.noise = 50.0 * std::numeric_limits<double>::epsilon() * noise * scale;
    out.integral = est.main;
    out.error = estimate_error(est);

    const double fc = values_[t.center_node()];
    const double ratio = t.probe().ratio;
    for (std::size_t a = 0; a < d; ++a) {
      const auto ia = static_cast<int>(a);
      const double inner = values_[t.axis_node(ia, 0, true)] + values_[t.axis_node(ia, 0, false)] - 2.0 * fc;
      const double outer = values_[t.axis_node(ia, 1, true)] + values_[t.axis_node(ia, 1, false)] - 2.0 * fc;
      out.axis_scores[a] = std::fabs(inner - ratio * outer);
    }
  }

  template <Integrand F>
  void tensor(std::span<const double> center, std::span<const double> half, double vol, F& f,
              RuleEvaluation& out) {
    const RuleTable& t = *table_;
    const auto d = static_cast<std::size_t>(t.dim());
    const auto x = t.gk_nodes();
    const auto wk = t.gk_kronrod_weights();
    const auto wg = t.gk_gauss_weights();
    const std::size_t m = x.size();
    std::fill(index_.begin(), index_.end(), 0);
    for (std::size_t a = 0; a < d; ++a) point_[a] = center[a] + half[a] * x[0];
    double kronrod = 0.0;
    double gauss = 0.0;
    for (std::size_t n = 0; n < t.node_count(); ++n) {
      const double v = static_cast<double>(f(std::span<const double>(point_)));
      if (!std::isfinite(v)) {
        out.non_finite = true;
        return;
      }
      double pk = 1.0;
      double pg = 1.0;
      for (std::size_t a = 0; a < d; ++a) {
        pk *= wk[index_[a]];
        pg *= wg[index_[a]];
      }
      kronrod += pk * v;
      gauss += pg * v;
      for (std::size_t a = 0; a < d; ++a) {
        const std::size_t j = index_[a];
        out.axis_scores[a] += pk / wk[j] * (wk[j] - wg[j]) * v;
      }
      // mixed-radix increment
      for (std::size_t a = 0; a < d; ++a) {
        if (++index_[a] < m) {
          point_[a] = center[a] + half[a] * x[index_[a]];
          break;
        }
        index_[a] = 0;
        point_[a] = center[a] + half[a] * x[0];
      }
    }
    const double scale = vol / std::ldexp(1.0, t.dim());
    out.integral = kronrod * scale;
    out.error = std::fabs(kronrod - gauss) * scale;
    for (auto& s : out.axis_scores) s = std::fabs(s) * scale;
  }

  const RuleTable* table_;
  std::vector<double> point_;
  std::vector<double> center_;
  std::vector<double> half_;
  std::vector<double> orbit_sums_;
  std::vector<double> orbit_abs_;
  std::vector<double> values_;
  std::vector<std::size_t> index_;
};

/// Applies `table` to `rect`: weights are mapped affinely from [-1,1]^d and
/// scaled by volume(rect) / 2^d.
template <Integrand F>
[[nodiscard]] RuleEvaluation apply_rule(const RuleTable& table, const HyperRect& rect, F&& f) {
  RuleEvaluator ev(table);
  return ev.evaluate(rect, f);
}

}  // namespace dquad
