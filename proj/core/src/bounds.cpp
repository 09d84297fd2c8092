#include "bcensus/bounds.hpp"

#include <cmath>

#include "bcensus/errors.hpp"

namespace bcensus {

namespace {

void check_rho(double rho) {
  if (!(rho > 0.0 && rho <= 1.0)) throw InvalidArgument("rho must lie in (0, 1]");
}

// D = -3 + sqrt(9 + (24/m) L) with L = ln(1/(1-gamma)), rewritten as
// x / (3 + sqrt(9 + x)) so small gamma does not cancel.
double tail_denominator(std::size_t m, double gamma) {
  const double log_term = -std::log1p(-gamma);
  const double x = 24.0 / static_cast<double>(m) * log_term;
  return x / (3.0 + std::sqrt(9.0 + x));
}

void check_beta_star_args(std::size_t m, double gamma) {
  if (m < 2) throw InvalidArgument("beta_star needs batch size m >= 2");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must lie in [0, 1)");
  if (gamma == 1.0) throw InvalidArgument("gamma = 1 makes ln(1/(1-gamma)) diverge");
  if (gamma == 0.0) throw UndefinedBound("beta_star is undefined when no collision was observed (gamma = 0)");
}

}  // namespace

Theorem1Bound theorem1_collision_lower_bound(std::size_t m, double rho, double n) {
  check_rho(rho);
  if (m == 0) throw InvalidArgument("batch size must be >= 1");
  if (!(n > 0.0)) throw InvalidArgument("support size n must be positive");
  const double md = static_cast<double>(m);
  return {
      .as_stated = -std::expm1(-md * md * rho / (2.0 * n)),
      .corrected = -std::expm1(-md * (md - 1.0) * rho / (2.0 * n)),
  };
}

ValidityFlags validity_check(std::size_t m, double beta) {
  if (!(beta > 1.0)) throw InvalidArgument("beta must exceed 1");
  return {
      .beta_gt_1000 = beta > 1000.0,
      .m_le_2_sqrt_beta_ln_beta = static_cast<double>(m) <= 2.0 * std::sqrt(beta * std::log(beta)),
  };
}

WienerTail wiener_tail_bound(std::size_t m, double beta) {
  if (m < 2) throw InvalidArgument("collision time bound needs m >= 2");
  if (!(beta > 1.0)) throw InvalidArgument("beta must exceed 1");
  const double md = static_cast<double>(m);
  return {
      .value = std::exp(-md * md / (2.0 * beta) - md * md * md / (6.0 * beta * beta)),
      .validity = validity_check(m, beta),
  };
}

double beta_star(std::size_t m, double gamma) {
  check_beta_star_args(m, gamma);
  return 2.0 * static_cast<double>(m) / tail_denominator(m, gamma);
}

std::optional<double> theorem2_support_bound(std::size_t m, double gamma, double rho) {
  check_beta_star_args(m, gamma);
  check_rho(rho);
  const double md = static_cast<double>(m);
  const double tail = 1.0 - rho;
  const double denom = tail_denominator(m, gamma) - 2.0 * md * tail * tail;
  if (!(denom > 0.0)) return std::nullopt;
  return 2.0 * md * rho * rho / denom;
}

BoundsReport make_bounds_report(std::size_t m, double gamma, double rho) {
  check_rho(rho);
  if (m < 2) throw InvalidArgument("bounds report needs batch size m >= 2");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in [0, 1)");

  BoundsReport r;
  r.m = m;
  r.gamma = gamma;
  r.rho = rho;
  if (gamma > 0.0) {
    r.beta_star = beta_star(m, gamma);
    r.support_bound = theorem2_support_bound(m, gamma, rho);
    r.denominator_positive = r.support_bound.has_value();
    if (*r.beta_star > 1.0) {
      const auto flags = validity_check(m, *r.beta_star);
      r.beta_gt_1000 = flags.beta_gt_1000;
      r.m_le_2_sqrt_beta_ln_beta = flags.m_le_2_sqrt_beta_ln_beta;
    }
  }
  const double md = static_cast<double>(m);
  r.theorem1_n = r.support_bound.value_or(md * md);
  const auto t1 = theorem1_collision_lower_bound(m, rho, r.theorem1_n);
  r.theorem1_bound = t1.as_stated;
  r.theorem1_bound_corrected = t1.corrected;
  return r;
}

nlohmann::json to_json(const BoundsReport& r) {
  auto nullable = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {
      {"m", r.m},
      {"gamma", r.gamma},
      {"rho", r.rho},
      {"theorem1_n", r.theorem1_n},
      {"theorem1_bound", r.theorem1_bound},
      {"theorem1_bound_corrected", r.theorem1_bound_corrected},
      {"beta_star", nullable(r.beta_star)},
      {"support_bound", nullable(r.support_bound)},
      {"beta_gt_1000", r.beta_gt_1000},
      {"m_le_2_sqrt_beta_ln_beta", r.m_le_2_sqrt_beta_ln_beta},
      {"denominator_positive", r.denominator_positive},
  };
}

BoundsReport bounds_report_from_json(const nlohmann::json& j) {
  auto nullable = [](const nlohmann::json& v) -> std::optional<double> {
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
  };
  BoundsReport r;
  r.m = j.at("m").get<std::size_t>();
  r.gamma = j.at("gamma").get<double>();
  r.rho = j.at("rho").get<double>();
  r.theorem1_n = j.at("theorem1_n").get<double>();
  r.theorem1_bound = j.at("theorem1_bound").get<double>();
  r.theorem1_bound_corrected = j.at("theorem1_bound_corrected").get<double>();
  r.beta_star = nullable(j.at("beta_star"));
  r.support_bound = nullable(j.at("support_bound"));
  r.beta_gt_1000 = j.at("beta_gt_1000").get<bool>();
  r.m_le_2_sqrt_beta_ln_beta = j.at("m_le_2_sqrt_beta_ln_beta").get<bool>();
  r.denominator_positive = j.at("denominator_positive").get<bool>();
  return r;
}

}  // namespace bcensus
