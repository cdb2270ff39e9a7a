#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "probsheet/blackbox.hpp"
#include "probsheet/dist.hpp"
#include "probsheet/eval.hpp"
#include "probsheet/graph.hpp"
#include "probsheet/rng.hpp"

namespace probsheet {

enum class InitMode { Zero, MomentMatched };

// Mean-field parameters and AdaGrad accumulators, one factor per ERP label.
struct VariationalState {
  ProposalMap factors;
  std::map<Label, std::vector<double>> sum_sq;
  std::size_t t = 0;
};

// Freezes a family for every ERP label and sets lambda = 0 (or the prior's
// moments). Between and Choice need deterministic arguments to fix the
// family's support; otherwise UnsupportedModelError.
VariationalState init_state(const CompiledSheet& compiled, const BlackOpRegistry& registry,
                            InitMode init = InitMode::Zero);

struct GradientEstimate {
  std::map<Label, std::vector<double>> delta;
  std::map<Label, std::size_t> fired;
  double mean_log_ratio = 0;  // ELBO estimate from the same samples
  std::size_t used = 0;       // samples with a finite log ratio
};

// Score-function estimate from S runs in Variational mode. Each sample adds
// grad_log_q * (T_p - T_q) to every label it fired; each label's sum is then
// divided by the number of samples in which it fired. Samples whose log ratio
// is not finite are left out. Throws GradientUnavailableError when a stochastic
// black-box operator appears in a trace.
GradientEstimate estimate_gradient(const CompiledSheet& compiled, const VariationalState& state,
                                   std::size_t samples, const BlackOpRegistry& registry,
                                   Rng& rng);

// G += delta^2, lambda += gamma * delta / sqrt(G) for the labels present in
// `est`; coordinates with G = 0 stay put. Returns the L2 norm of the change.
double adagrad_step(VariationalState& state, const GradientEstimate& est, double gamma);

double elbo_estimate(const CompiledSheet& compiled, const VariationalState& state,
                     std::size_t samples, const BlackOpRegistry& registry, Rng& rng);

struct BbviConfig {
  std::size_t samples = 10;
  std::size_t max_iterations = 1000;
  double gamma = 0.1;
  double epsilon = 1e-4;
  std::uint64_t seed = 0;
  InitMode init = InitMode::Zero;
};

// Throws ConfigError for non-positive settings.
void validate(const BbviConfig& config);

struct TraceRow {
  std::size_t iteration = 0;
  double elbo = 0;
  double gradient_norm = 0;
  double step_norm = 0;
};

struct FactorSummary {
  Label label;
  VariationalFamily family;
  ParamVector lambda;
  Moments moments;
  std::vector<std::pair<double, double>> density;
};

struct BbviResult {
  VariationalState state;
  bool converged = false;
  std::size_t iterations = 0;
  std::vector<TraceRow> trace;
  std::vector<FactorSummary> factors;
};

// Iterates estimate_gradient + adagrad_step until the step norm drops below
// epsilon or max_iterations is reached. Iteration t draws from
// derive_stream(seed, {t}).
BbviResult run_bbvi(const CompiledSheet& compiled, const BbviConfig& config,
                    const BlackOpRegistry& registry, std::size_t grid_points = 200);

// Posterior-predictive draws of `cells` under the fitted factors.
std::vector<std::vector<double>> sample_fitted(const CompiledSheet& compiled,
                                               const VariationalState& state,
                                               const std::vector<CellRef>& cells,
                                               std::size_t draws, const BlackOpRegistry& registry,
                                               Rng& rng);

}  // namespace probsheet
