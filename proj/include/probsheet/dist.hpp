#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "probsheet/formula.hpp"
#include "probsheet/rng.hpp"

namespace probsheet {

// An elementary random procedure with evaluated parameters:
//   Gaussian [mean, stddev], Between [low, high],
//   Choice [v1, p1, ..., vn, pn], Near [val].
struct ErpParams {
  ErpKind kind;
  std::vector<double> args;
};

// Throws ParamError naming the violated constraint (stddev > 0, low < high,
// nonnegative weights with positive total, val > 0).
void validate(const ErpParams& p);

// Near(val) is Gaussian(val, 0.1 * val).
double sample_erp(const ErpParams& p, Rng& rng);

// Log density (or log mass for Choice). Off-support points give -inf.
double score_erp(const ErpParams& p, double x);

using ParamVector = std::vector<double>;

enum class FamilyKind { Gaussian, ScaledBeta, SoftmaxChoice };

// Mean-field factor for one random choice. The free parameters live in a
// separate ParamVector:
//   Gaussian       lambda = (mean, log stddev)
//   ScaledBeta     lambda = (log alpha, log beta), x = low + (high - low) * Beta
//   SoftmaxChoice  lambda = logits over `values`
struct VariationalFamily {
  FamilyKind kind = FamilyKind::Gaussian;
  double low = 0;
  double high = 1;
  std::vector<double> values;

  static VariationalFamily gaussian();
  static VariationalFamily scaled_beta(double low, double high);
  static VariationalFamily softmax_choice(std::vector<double> values);

  std::size_t dimension() const;
  friend bool operator==(const VariationalFamily&, const VariationalFamily&) = default;
};

VariationalFamily default_family(const ErpParams& p);

// All three throw DimensionError when lambda.size() != fam.dimension().
double sample_q(const VariationalFamily& fam, const ParamVector& lambda, Rng& rng);
double score_q(const VariationalFamily& fam, const ParamVector& lambda, double x);
// Closed-form gradient of score_q with respect to lambda. Throws SupportError
// where the score is -inf.
std::vector<double> grad_log_q(const VariationalFamily& fam, const ParamVector& lambda,
                               double x);

// Parameters of a family matched to the prior's first two moments (the
// optional alternative to zero initialisation).
ParamVector moment_matched_params(const VariationalFamily& fam, const ErpParams& prior);

struct Moments {
  double mean = 0;
  double stddev = 0;
};

Moments family_moments(const VariationalFamily& fam, const ParamVector& lambda);

// (x, density) pairs. Continuous families are sampled on `points` evenly
// spaced abscissae; Choice reports its probability mass at each value.
std::vector<std::pair<double, double>> family_density_grid(const VariationalFamily& fam,
                                                           const ParamVector& lambda,
                                                           std::size_t points);

// Digamma function for x > 0 (upward recurrence to x >= 6, then the
// asymptotic series). Throws DomainError for x <= 0.
double digamma(double x);

}  // namespace probsheet
