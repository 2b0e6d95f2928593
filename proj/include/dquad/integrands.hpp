#pragma once

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dquad/errors.hpp"

namespace dquad {

// The seven benchmark integrands on [0,1]^d. Coordinates are 1-indexed in the
// formulas below (x_1 .. x_d):
//
//   f1 = cos(sum i x_i)                        oscillatory
//   f2 = prod 1 / (50^-2 + (x_i - 1/2)^2)      product peak
//   f3 = (1 + sum i x_i)^-(d+1)                corner peak
//   f4 = exp(-25^2 sum (x_i - 1/2)^2)          Gaussian
//   f5 = exp(-10 sum |x_i - 1/2|)              C0 (kinked)
//   f6 = 0 if any x_i > (3+i)/10, else exp(sum (i+4) x_i)   discontinuous
//   f7 = (sum x_i^2)^11                        high-degree polynomial

enum class FunctionId { f1 = 1, f2, f3, f4, f5, f6, f7 };

enum class ReferenceProvenance { closed_form, oracle };

[[nodiscard]] inline std::string to_string(FunctionId id) { return "f" + std::to_string(static_cast<int>(id)); }

[[nodiscard]] inline std::string to_string(ReferenceProvenance p) {
  return p == ReferenceProvenance::closed_form ? "closed_form" : "oracle";
}

/// Pure evaluator for one suite member. `peak_center` moves the f2 peak
/// (default 1/2); the corner-shifted variant is used to provoke load imbalance.
struct SuiteFunction {
  FunctionId id = FunctionId::f1;
  int dim = 1;
  double peak_center = 0.5;

  double operator()(std::span<const double> x) const noexcept {
    const std::size_t d = x.size();
    switch (id) {
      case FunctionId::f1: {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += static_cast<double>(i + 1) * x[i];
        return std::cos(s);
      }
      case FunctionId::f2: {
        double p = 1.0;
        for (std::size_t i = 0; i < d; ++i) {
          const double t = x[i] - peak_center;
          p *= 1.0 / (1.0 / 2500.0 + t * t);
        }
        return p;
      }
      case FunctionId::f3: {
        double s = 1.0;
        for (std::size_t i = 0; i < d; ++i) s += static_cast<double>(i + 1) * x[i];
        return std::pow(s, -static_cast<double>(d + 1));
      }
      case FunctionId::f4: {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          const double t = x[i] - 0.5;
          s += t * t;
        }
        return std::exp(-625.0 * s);
      }
      case FunctionId::f5: {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += std::fabs(x[i] - 0.5);
        return std::exp(-10.0 * s);
      }
      case FunctionId::f6: {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          const double k = static_cast<double>(i + 1);
          if (x[i] > (3.0 + k) / 10.0) return 0.0;
          s += (k + 4.0) * x[i];
        }
        return std::exp(s);
      }
      case FunctionId::f7: {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += x[i] * x[i];
        const double s2 = s * s;
        const double s4 = s2 * s2;
        const double s8 = s4 * s4;
        return s8 * s2 * s;
      }
    }
    return 0.0;
  }
};

namespace detail {

inline double repeat_product(double one_dim, int d) {
  double v = 1.0;
  for (int i = 0; i < d; ++i) v *= one_dim;
  return v;
}

// Inclusion-exclusion over subsets S of {1..d}, grouped by s = sum(S):
//   I = 1/(d! prod i) * sum_s c_s / (1 + s),  c_s = sum_{S: sum S = s} (-1)^|S|.
// Evaluated in 50-digit arithmetic because the alternating sum cancels heavily.
inline double corner_peak_reference(int d) {
  using big = boost::multiprecision::cpp_bin_float_50;
  const int max_sum = d * (d + 1) / 2;
  std::vector<long long> c(static_cast<std::size_t>(max_sum + 1), 0);
  c[0] = 1;
  for (int i = 1; i <= d; ++i) {
    for (int s = max_sum; s >= i; --s) c[static_cast<std::size_t>(s)] -= c[static_cast<std::size_t>(s - i)];
  }
  big sum = 0;
  for (int s = 0; s <= max_sum; ++s) sum += big(c[static_cast<std::size_t>(s)]) / big(1 + s);
  big fact = 1;
  for (int i = 2; i <= d; ++i) fact *= i;
  return static_cast<double>(sum / (fact * fact));
}

// (sum x_i^2)^11 expanded multinomially; each monomial integrates to
// prod 1/(2k_i+1) on [0,1]^d. All terms are positive.
inline double polynomial_reference(int d) {
  constexpr int n = 11;
  std::vector<long double> one(n + 1);
  long double fact = 1.0L;
  for (int k = 0; k <= n; ++k) {
    if (k > 0) fact *= k;
    one[static_cast<std::size_t>(k)] = 1.0L / (fact * (2 * k + 1));
  }
  std::vector<long double> acc(n + 1, 0.0L);
  acc[0] = 1.0L;
  for (int dim = 0; dim < d; ++dim) {
    std::vector<long double> next(n + 1, 0.0L);
    for (int a = 0; a <= n; ++a) {
      for (int b = 0; a + b <= n; ++b) next[static_cast<std::size_t>(a + b)] += acc[static_cast<std::size_t>(a)] * one[static_cast<std::size_t>(b)];
    }
    acc = std::move(next);
  }
  return static_cast<double>(acc[n] * fact);
}

// Re prod_k (e^{ik} - 1)/(ik).
inline double oscillatory_reference(int d) {
  std::complex<long double> p(1.0L, 0.0L);
  for (int k = 1; k <= d; ++k) {
    const long double kk = k;
    p *= std::complex<long double>(std::sin(kk) / kk, (1.0L - std::cos(kk)) / kk);
  }
  return static_cast<double>(p.real());
}

}  // namespace detail

/// Exact integral of suite member `id` over [0,1]^d.
[[nodiscard]] inline double reference_integral(FunctionId id, int d, double peak_center = 0.5) {
  if (d < 1) throw ContractViolation("reference_integral: d must be >= 1");
  switch (id) {
    case FunctionId::f1:
      return detail::oscillatory_reference(d);
    case FunctionId::f2: {
      const double one = 50.0 * (std::atan(50.0 * (1.0 - peak_center)) + std::atan(50.0 * peak_center));
      return detail::repeat_product(one, d);
    }
    case FunctionId::f3:
      return detail::corner_peak_reference(d);
    case FunctionId::f4:
      return detail::repeat_product(std::sqrt(std::numbers::pi) / 25.0 * std::erf(12.5), d);
    case FunctionId::f5:
      return detail::repeat_product((1.0 - std::exp(-5.0)) / 5.0, d);
    case FunctionId::f6: {
      double v = 1.0;
      for (int i = 1; i <= d; ++i) v *= std::expm1((i + 4) * (3.0 + i) / 10.0) / (i + 4);
      return v;
    }
    case FunctionId::f7:
      return detail::polynomial_reference(d);
  }
  return 0.0;
}

[[nodiscard]] inline ReferenceProvenance reference_provenance(FunctionId id) {
  return id == FunctionId::f3 || id == FunctionId::f7 ? ReferenceProvenance::oracle : ReferenceProvenance::closed_form;
}

struct BenchmarkIntegrand {
  FunctionId id;
  int dim;
  SuiteFunction evaluate;
  double reference_value;
  ReferenceProvenance reference_provenance;
};

[[nodiscard]] inline BenchmarkIntegrand make_integrand(FunctionId id, int d, double peak_center = 0.5) {
  if (d < 1) throw ContractViolation("make_integrand: d must be >= 1");
  if (peak_center != 0.5 && id != FunctionId::f2) {
    throw ContractViolation("make_integrand: only f2 has a movable peak");
  }
  return {id, d, SuiteFunction{id, d, peak_center}, reference_integral(id, d, peak_center),
          dquad::reference_provenance(id)};
}

/// Parses "f1".."f7"; "f2-corner" selects f2 with its peak at 1/4 in every
/// coordinate. Returns nullopt for anything else.
struct FunctionSpec {
  FunctionId id;
  double peak_center = 0.5;
  std::string label;
};

inline constexpr double kCornerPeakCenter = 0.25;

[[nodiscard]] inline std::optional<FunctionSpec> parse_function(const std::string& s) {
  if (s == "f2-corner") return FunctionSpec{FunctionId::f2, kCornerPeakCenter, s};
  if (s.size() == 2 && s[0] == 'f' && s[1] >= '1' && s[1] <= '7') {
    return FunctionSpec{static_cast<FunctionId>(s[1] - '0'), 0.5, s};
  }
  return std::nullopt;
}

}  // namespace dquad
