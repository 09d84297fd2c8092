#pragma once

#include <cstddef>
#include <optional>

#include <nlohmann/json.hpp>

namespace bcensus {

// Lower bounds on the collision probability of m draws when some set of n
// atoms carries mass >= rho.
struct Theorem1Bound {
  double as_stated = 0.0;  // 1 - exp(-m^2 rho / 2n)
  double corrected = 0.0;  // 1 - exp(-m(m-1) rho / 2n); never exceeds the truth
};

Theorem1Bound theorem1_collision_lower_bound(std::size_t m, double rho, double n);

// Conditions under which the collision-time tail bound is known to hold.
struct ValidityFlags {
  bool beta_gt_1000 = false;
  bool m_le_2_sqrt_beta_ln_beta = false;

  bool all() const noexcept { return beta_gt_1000 && m_le_2_sqrt_beta_ln_beta; }
};

ValidityFlags validity_check(std::size_t m, double beta);

struct WienerTail {
  double value = 0.0;  // exp(-m^2/(2 beta) - m^3/(6 beta^2)), a lower bound on Pr[T >= m]
  ValidityFlags validity;
};

// Computed outside the validity region too; the flags say whether to trust it.
WienerTail wiener_tail_bound(std::size_t m, double beta);

// Largest uniformity surrogate consistent with observing collision
// probability gamma at batch size m. Throws UndefinedBound for gamma == 0 and
// InvalidArgument for gamma outside (0, 1) or m < 2.
double beta_star(std::size_t m, double gamma);

// Upper bound on the size of the smallest set carrying mass rho. Empty when
// the denominator is not positive. Propagates beta_star's errors.
std::optional<double> theorem2_support_bound(std::size_t m, double gamma, double rho);

struct BoundsReport {
  std::size_t m = 0;
  double gamma = 0.0;
  double rho = 1.0;
  // Support size at which the collision lower bound was evaluated: the
  // support bound when defined, m^2 otherwise.
  double theorem1_n = 0.0;
  double theorem1_bound = 0.0;
  double theorem1_bound_corrected = 0.0;
  std::optional<double> beta_star;
  std::optional<double> support_bound;
  bool beta_gt_1000 = false;
  bool m_le_2_sqrt_beta_ln_beta = false;
  bool denominator_positive = false;
};

// gamma in [0, 1); gamma == 0 yields null beta_star and support_bound.
BoundsReport make_bounds_report(std::size_t m, double gamma, double rho);

// Flat object; undefined bounds serialize as null.
nlohmann::json to_json(const BoundsReport& report);
BoundsReport bounds_report_from_json(const nlohmann::json& j);

}  // namespace bcensus
