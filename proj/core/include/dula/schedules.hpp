#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dula {

/// Power-law step sizes
///
///   alpha_k = a / (k + 1 + offset2)^delta2
///   beta_k  = b / (k + 1 + offset1)^delta1
///
/// offset == 0 gives the plain (k+1) form. The shifted form a0 / (s + k)^delta
/// used in the experiments corresponds to offset = s - 1; see from_shifted().
struct StepSchedule {
  double a = 1.0;
  double b = 0.1;
  double delta1 = 0.0;
  double delta2 = 0.75;
  double offset1 = 0.0;
  double offset2 = 0.0;

  /// alpha_k = alpha0 / (shift2 + k)^delta2, beta_k = beta0 / (shift1 + k)^delta1.
  /// Requires shift1, shift2 >= 1.
  static StepSchedule from_shifted(double alpha0, double shift2, double delta2, double beta0,
                                   double shift1, double delta1);

  double alpha(std::uint64_t k) const;
  double beta(std::uint64_t k) const;
};

struct ScheduleViolation {
  std::string constraint;
  /// Fatal violations make alpha/beta meaningless (non-positive gains,
  /// negative offsets). Non-fatal ones only void the convergence guarantees.
  bool fatal = false;
};

struct ScheduleVerdict {
  std::vector<ScheduleViolation> violations;

  bool ok() const noexcept { return violations.empty(); }
  bool has_fatal() const noexcept;
  std::string describe() const;
};

/// Checks 0 < a, 0 < b, 0 <= delta1, 1/2 + delta1 < delta2 < 1 and offsets >= 0.
ScheduleVerdict validate(const StepSchedule& s);

/// Constants that cannot be estimated from data and must be supplied by the user.
struct TheoreticalInputs {
  double rho_u = 1.0;      // log-Sobolev constant
  double lipschitz = 1.0;  // max Lipschitz constant of the local potential gradients
  double gamma = 3.0;      // speed-up exponent, > 2
  double mu_g = 1.0;       // gradient-disagreement constant
  std::size_t d_w = 1;
};

struct RecommendedGain {
  double a = 0.0;
  /// 1 - 24 n^4 L^4 delta2 a^3 / (rho_U (3 delta2 - 1)); positive means the
  /// bounded-second-moment condition on a holds.
  double margin = 0.0;
};

/// a = n^-gamma * (rho_U (3 delta2 - 1) / (25 L^4 delta2))^(1/3).
RecommendedGain recommended_a(const TheoreticalInputs& t, std::size_t n, double delta2);

/// Constants of the KL bound consumed by the iteration-complexity formula.
struct KlBoundConstants {
  double f0 = 0.0;  // initial KL divergence
  double cf1 = 0.0;
  double cf2 = 0.0;
  double cf3 = 0.0;
};

/// Smallest k after which the KL bound is below epsilon (ceiling of the max of two branches).
std::uint64_t k_star(const TheoreticalInputs& t, const StepSchedule& s, std::size_t n,
                     double epsilon, const KlBoundConstants& c);

}  // namespace dula
