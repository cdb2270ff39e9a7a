#include "probsheet/dist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "probsheet/errors.hpp"

namespace probsheet {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double gaussian_log_density(double x, double mean, double stddev) {
  const double z = (x - mean) / stddev;
  return -kHalfLog2Pi - std::log(stddev) - 0.5 * z * z;
}

double near_stddev(double val) { return 0.1 * val; }

void require(bool ok, const ErpParams& p, const std::string& what) {
  if (!ok) throw ParamError(std::string(erp_name(p.kind)) + ": " + what);
}

// Log of a Gamma(shape, 1) draw. For shape < 1 uses
// Gamma(a) = Gamma(a + 1) * U^(1/a) in log space so tiny shapes do not
// underflow to zero.
double log_gamma_draw(double shape, Rng& rng) {
  if (shape >= 1.0) {
    std::gamma_distribution<double> g(shape, 1.0);
    return std::log(g(rng));
  }
  std::gamma_distribution<double> g(shape + 1.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double v = u(rng);
  while (v == 0.0) v = u(rng);
  return std::log(g(rng)) + std::log(v) / shape;
}

double log_beta_fn(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

void check_dim(const VariationalFamily& fam, const ParamVector& lambda) {
  if (lambda.size() != fam.dimension()) {
    throw DimensionError("variational parameter vector has " +
                         std::to_string(lambda.size()) + " entries, family needs " +
                         std::to_string(fam.dimension()));
  }
}

std::vector<double> softmax(const ParamVector& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double total = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

// Given u = (x - low)/(high - low) strictly inside (0, 1).
double beta_unit(const VariationalFamily& fam, double x) {
  return (x - fam.low) / (fam.high - fam.low);
}

}  // namespace

// ---------------------------------------------------------------------------
// Priors
// ---------------------------------------------------------------------------

void validate(const ErpParams& p) {
  const auto& a = p.args;
  for (double v : a) require(std::isfinite(v), p, "parameters must be finite");
  switch (p.kind) {
    case ErpKind::Gaussian:
      require(a.size() == 2, p, "expects 2 parameters");
      require(a[1] > 0, p, "stddev must be > 0, got " + format_number(a[1]));
      return;
    case ErpKind::Between:
      require(a.size() == 2, p, "expects 2 parameters");
      require(a[0] < a[1], p,
              "low must be < high, got " + format_number(a[0]) + " and " + format_number(a[1]));
      return;
    case ErpKind::Choice: {
      require(a.size() >= 2 && a.size() % 2 == 0, p, "expects value/weight pairs");
      double total = 0;
      for (std::size_t i = 1; i < a.size(); i += 2) {
        require(a[i] >= 0, p, "weights must be >= 0, got " + format_number(a[i]));
        total += a[i];
      }
      require(total > 0, p, "weights must have a positive sum");
      return;
    }
    case ErpKind::Near:
      require(a.size() == 1, p, "expects 1 parameter");
      require(a[0] > 0, p, "val must be > 0, got " + format_number(a[0]));
      return;
  }
}

double sample_erp(const ErpParams& p, Rng& rng) {
  validate(p);
  const auto& a = p.args;
  switch (p.kind) {
    case ErpKind::Gaussian:
      return std::normal_distribution<double>(a[0], a[1])(rng);
    case ErpKind::Between:
      return std::uniform_real_distribution<double>(a[0], a[1])(rng);
    case ErpKind::Choice: {
      std::vector<double> weights;
      for (std::size_t i = 1; i < a.size(); i += 2) weights.push_back(a[i]);
      std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
      return a[2 * pick(rng)];
    }
    case ErpKind::Near:
      return std::normal_distribution<double>(a[0], near_stddev(a[0]))(rng);
  }
  return 0;
}

double score_erp(const ErpParams& p, double x) {
  validate(p);
  const auto& a = p.args;
  switch (p.kind) {
    case ErpKind::Gaussian:
      return gaussian_log_density(x, a[0], a[1]);
    case ErpKind::Between:
      return (x >= a[0] && x <= a[1]) ? -std::log(a[1] - a[0]) : kNegInf;
    case ErpKind::Choice: {
      double total = 0;
      double matched = 0;
      for (std::size_t i = 0; i < a.size(); i += 2) {
        total += a[i + 1];
        if (a[i] == x) matched += a[i + 1];
      }
      return matched > 0 ? std::log(matched / total) : kNegInf;
    }
    case ErpKind::Near:
      return gaussian_log_density(x, a[0], near_stddev(a[0]));
  }
  return kNegInf;
}

// ---------------------------------------------------------------------------
// Variational families
// ---------------------------------------------------------------------------

VariationalFamily VariationalFamily::gaussian() { return VariationalFamily{}; }

VariationalFamily VariationalFamily::scaled_beta(double low, double high) {
  if (!(low < high)) throw ParamError("scaled beta family needs low < high");
  VariationalFamily f;
  f.kind = FamilyKind::ScaledBeta;
  f.low = low;
  f.high = high;
  return f;
}

VariationalFamily VariationalFamily::softmax_choice(std::vector<double> values) {
  if (values.empty()) throw ParamError("choice family needs at least one value");
  VariationalFamily f;
  f.kind = FamilyKind::SoftmaxChoice;
  f.values = std::move(values);
  return f;
}

std::size_t VariationalFamily::dimension() const {
  return kind == FamilyKind::SoftmaxChoice ? values.size() : 2;
}

VariationalFamily default_family(const ErpParams& p) {
  validate(p);
  switch (p.kind) {
    case ErpKind::Gaussian:
    case ErpKind::Near:
      return VariationalFamily::gaussian();
    case ErpKind::Between:
      return VariationalFamily::scaled_beta(p.args[0], p.args[1]);
    case ErpKind::Choice: {
      std::vector<double> values;
      for (std::size_t i = 0; i < p.args.size(); i += 2) {
        if (std::find(values.begin(), values.end(), p.args[i]) == values.end()) {
          values.push_back(p.args[i]);
        }
      }
      return VariationalFamily::softmax_choice(std::move(values));
    }
  }
  return VariationalFamily::gaussian();
}

double sample_q(const VariationalFamily& fam, const ParamVector& lambda, Rng& rng) {
  check_dim(fam, lambda);
  switch (fam.kind) {
    case FamilyKind::Gaussian:
      return std::normal_distribution<double>(lambda[0], std::exp(lambda[1]))(rng);
    case FamilyKind::ScaledBeta: {
      const double lx = log_gamma_draw(std::exp(lambda[0]), rng);
      const double ly = log_gamma_draw(std::exp(lambda[1]), rng);
      // u = X / (X + Y) computed as a logistic of the log ratio.
      double u = 1.0 / (1.0 + std::exp(ly - lx));
      // Keep draws strictly inside the support so the score stays finite.
      u = std::clamp(u, std::numeric_limits<double>::min(),
                     1.0 - std::numeric_limits<double>::epsilon());
      return fam.low + (fam.high - fam.low) * u;
    }
    case FamilyKind::SoftmaxChoice: {
      const std::vector<double> p = softmax(lambda);
      std::discrete_distribution<std::size_t> pick(p.begin(), p.end());
      return fam.values[pick(rng)];
    }
  }
  return 0;
}

double score_q(const VariationalFamily& fam, const ParamVector& lambda, double x) {
  check_dim(fam, lambda);
  switch (fam.kind) {
    case FamilyKind::Gaussian:
      return gaussian_log_density(x, lambda[0], std::exp(lambda[1]));
    case FamilyKind::ScaledBeta: {
      const double u = beta_unit(fam, x);
      if (!(u > 0.0 && u < 1.0)) return kNegInf;
      const double a = std::exp(lambda[0]);
      const double b = std::exp(lambda[1]);
      return (a - 1.0) * std::log(u) + (b - 1.0) * std::log1p(-u) - log_beta_fn(a, b) -
             std::log(fam.high - fam.low);
    }
    case FamilyKind::SoftmaxChoice: {
      const std::vector<double> p = softmax(lambda);
      double matched = 0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (fam.values[i] == x) matched += p[i];
      }
      return matched > 0 ? std::log(matched) : kNegInf;
    }
  }
  return kNegInf;
}

std::vector<double> grad_log_q(const VariationalFamily& fam, const ParamVector& lambda,
                               double x) {
  check_dim(fam, lambda);
  switch (fam.kind) {
    case FamilyKind::Gaussian: {
      const double s2 = std::exp(2.0 * lambda[1]);
      const double d = x - lambda[0];
      return {d / s2, d * d / s2 - 1.0};
    }
    case FamilyKind::ScaledBeta: {
      const double u = beta_unit(fam, x);
      if (!(u > 0.0 && u < 1.0)) {
        throw SupportError("scaled beta gradient requested outside (" +
                           format_number(fam.low) + ", " + format_number(fam.high) + ")");
      }
      const double a = std::exp(lambda[0]);
      const double b = std::exp(lambda[1]);
      const double psi_ab = digamma(a + b);
      return {a * (std::log(u) - digamma(a) + psi_ab),
              b * (std::log1p(-u) - digamma(b) + psi_ab)};
    }
    case FamilyKind::SoftmaxChoice: {
      const std::vector<double> p = softmax(lambda);
      double matched = 0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (fam.values[i] == x) matched += p[i];
      }
      if (!(matched > 0)) {
        throw SupportError("choice gradient requested at a value outside the family");
      }
      std::vector<double> g(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) {
        g[i] = (fam.values[i] == x ? p[i] / matched : 0.0) - p[i];
      }
      return g;
    }
  }
  return {};
}

ParamVector moment_matched_params(const VariationalFamily& fam, const ErpParams& prior) {
  validate(prior);
  switch (fam.kind) {
    case FamilyKind::Gaussian:
      if (prior.kind == ErpKind::Gaussian) {
        return {prior.args[0], std::log(prior.args[1])};
      }
      if (prior.kind == ErpKind::Near) {
        return {prior.args[0], std::log(near_stddev(prior.args[0]))};
      }
      return {0.0, 0.0};
    case FamilyKind::ScaledBeta:
      // Uniform prior on [low, high] is Beta(1, 1).
      return {0.0, 0.0};
    case FamilyKind::SoftmaxChoice: {
      if (prior.kind != ErpKind::Choice) return ParamVector(fam.dimension(), 0.0);
      ParamVector mass(fam.dimension(), 0.0);
      double total = 0;
      for (std::size_t i = 0; i + 1 < prior.args.size(); i += 2) {
        auto it = std::find(fam.values.begin(), fam.values.end(), prior.args[i]);
        if (it != fam.values.end()) mass[it - fam.values.begin()] += prior.args[i + 1];
        total += prior.args[i + 1];
      }
      ParamVector logits;
      // Zero-weight values keep a tiny mass so the logit stays finite.
      for (double m : mass) logits.push_back(std::log(std::max(m / total, 1e-12)));
      return logits;
    }
  }
  return {};
}

Moments family_moments(const VariationalFamily& fam, const ParamVector& lambda) {
  check_dim(fam, lambda);
  switch (fam.kind) {
    case FamilyKind::Gaussian:
      return {lambda[0], std::exp(lambda[1])};
    case FamilyKind::ScaledBeta: {
      const double a = std::exp(lambda[0]);
      const double b = std::exp(lambda[1]);
      const double w = fam.high - fam.low;
      const double var = a * b / ((a + b) * (a + b) * (a + b + 1.0));
      return {fam.low + w * a / (a + b), w * std::sqrt(var)};
    }
    case FamilyKind::SoftmaxChoice: {
      const std::vector<double> p = softmax(lambda);
      double mean = 0;
      double second = 0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        mean += p[i] * fam.values[i];
        second += p[i] * fam.values[i] * fam.values[i];
      }
      return {mean, std::sqrt(std::max(0.0, second - mean * mean))};
    }
  }
  return {};
}

std::vector<std::pair<double, double>> family_density_grid(const VariationalFamily& fam,
                                                           const ParamVector& lambda,
                                                           std::size_t points) {
  check_dim(fam, lambda);
  std::vector<std::pair<double, double>> grid;
  if (fam.kind == FamilyKind::SoftmaxChoice) {
    const std::vector<double> p = softmax(lambda);
    for (std::size_t i = 0; i < p.size(); ++i) grid.emplace_back(fam.values[i], p[i]);
    return grid;
  }
  points = std::max<std::size_t>(points, 2);
  double lo = fam.low;
  double hi = fam.high;
  if (fam.kind == FamilyKind::Gaussian) {
    const double s = std::exp(lambda[1]);
    lo = lambda[0] - 4.0 * s;
    hi = lambda[0] + 4.0 * s;
  }
  for (std::size_t i = 0; i < points; ++i) {
    const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    const double lp = score_q(fam, lambda, x);
    grid.emplace_back(x, std::isfinite(lp) ? std::exp(lp) : 0.0);
  }
  return grid;
}

double digamma(double x) {
  if (!(x > 0.0)) throw DomainError("digamma requires x > 0, got " + format_number(x));
  double result = 0.0;
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double r = 1.0 / x;
  const double r2 = r * r;
  // ln x - 1/(2x) - sum B_2k / (2k x^2k), k = 1..6
  const double series =
      r2 * (1.0 / 12 -
            r2 * (1.0 / 120 -
                  r2 * (1.0 / 252 - r2 * (1.0 / 240 - r2 * (1.0 / 132 - r2 * (691.0 / 32760))))));
  return result + std::log(x) - 0.5 * r - series;
}

}  // namespace probsheet
