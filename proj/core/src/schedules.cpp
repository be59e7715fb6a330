#include "dula/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dula/error.hpp"

namespace dula {

StepSchedule StepSchedule::from_shifted(double alpha0, double shift2, double delta2, double beta0,
                                        double shift1, double delta1) {
  if (shift1 < 1.0 || shift2 < 1.0) {
    throw InvalidSchedule("shifted schedule requires shifts >= 1");
  }
  return StepSchedule{alpha0, beta0, delta1, delta2, shift1 - 1.0, shift2 - 1.0};
}

double StepSchedule::alpha(std::uint64_t k) const {
  return a / std::pow(static_cast<double>(k) + 1.0 + offset2, delta2);
}

double StepSchedule::beta(std::uint64_t k) const {
  return b / std::pow(static_cast<double>(k) + 1.0 + offset1, delta1);
}

bool ScheduleVerdict::has_fatal() const noexcept {
  return std::any_of(violations.begin(), violations.end(),
                     [](const ScheduleViolation& v) { return v.fatal; });
}

std::string ScheduleVerdict::describe() const {
  if (ok()) return "ok";
  std::ostringstream out;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i) out << "; ";
    out << (violations[i].fatal ? "error: " : "warning: ") << violations[i].constraint;
  }
  return out.str();
}

ScheduleVerdict validate(const StepSchedule& s) {
  ScheduleVerdict v;
  auto add = [&](bool failed, std::string what, bool fatal) {
    if (failed) v.violations.push_back({std::move(what), fatal});
  };
  add(!(s.a > 0.0), "a > 0", true);
  add(!(s.b > 0.0), "b > 0", true);
  add(!(s.offset1 >= 0.0), "offset1 >= 0", true);
  add(!(s.offset2 >= 0.0), "offset2 >= 0", true);
  add(!(s.delta1 >= 0.0), "delta1 >= 0", false);
  add(!(0.5 + s.delta1 < s.delta2), "1/2 + delta1 < delta2", false);
  add(!(s.delta2 < 1.0), "delta2 < 1", false);
  return v;
}

RecommendedGain recommended_a(const TheoreticalInputs& t, std::size_t n, double delta2) {
  if (!(t.gamma > 2.0)) throw InvalidParameter("gamma must exceed 2");
  if (!(t.rho_u > 0.0) || !(t.lipschitz > 0.0)) {
    throw InvalidParameter("rho_U and L must be positive");
  }
  if (n == 0) throw InvalidParameter("agent count must be positive");
  if (!(delta2 > 1.0 / 3.0)) throw InvalidParameter("delta2 must exceed 1/3");

  const double l4 = std::pow(t.lipschitz, 4);
  const double nd = static_cast<double>(n);
  const double base = t.rho_u * (3.0 * delta2 - 1.0) / (25.0 * l4 * delta2);
  const double a = std::cbrt(base) / std::pow(nd, t.gamma);
  const double ratio =
      24.0 * std::pow(nd, 4) * l4 * delta2 * a * a * a / (t.rho_u * (3.0 * delta2 - 1.0));
  return {a, 1.0 - ratio};
}

std::uint64_t k_star(const TheoreticalInputs& t, const StepSchedule& s, std::size_t n,
                     double epsilon, const KlBoundConstants& c) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidParameter("epsilon must lie in (0,1)");
  if (!(s.delta2 - 2.0 * s.delta1 > 0.0)) throw InvalidSchedule("requires delta2 - 2 delta1 > 0");
  if (!(s.delta2 < 1.0)) throw InvalidSchedule("requires delta2 < 1");
  if (!(t.gamma > 2.0)) throw InvalidParameter("gamma must exceed 2");
  if (c.f0 < 0 || c.cf1 < 0 || c.cf2 < 0 || c.cf3 < 0) {
    throw InvalidParameter("bound constants must be nonnegative");
  }

  const double a_rho = s.a * t.rho_u;
  const double q1 = (c.f0 + c.cf1) * std::exp(a_rho / (1.0 - s.delta2)) + c.cf3;
  const double q2 = c.cf2 / std::pow(static_cast<double>(n), t.gamma - 2.0);

  // A branch whose bound already sits below epsilon/2 at k = 0 contributes nothing.
  double exp_branch = 0.0;
  if (q1 > 0.0) {
    const double log_term = std::log(2.0 * q1 / epsilon);
    if (log_term > 0.0) {
      exp_branch = std::pow((1.0 - s.delta2) / a_rho * log_term, 1.0 / (1.0 - s.delta2));
    }
  }
  double poly_branch = 0.0;
  if (q2 > 0.0) poly_branch = std::pow(2.0 * q2 / epsilon, 1.0 / (s.delta2 - 2.0 * s.delta1));

  const double k = std::ceil(std::max(exp_branch, poly_branch));
  if (k >= static_cast<double>(std::numeric_limits<std::uint64_t>::max())) {
    return std::numeric_limits<std::uint64_t>::max();
  }
  return static_cast<std::uint64_t>(k);
}

}  // namespace dula
