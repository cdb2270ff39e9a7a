#include "probsheet/bbvi.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <string>

#include "probsheet/errors.hpp"

namespace probsheet {

namespace {

struct FreezeContext {
  const std::set<CellRef>& random_cells;
  const BlackOpRegistry& registry;
  const State& fixed;
  const EvalContext& eval;
  InitMode init;
  VariationalState& out;
};

void freeze_erps(const Expr& e, const CellRef& cell, FreezeContext& fc) {
  std::visit(
      [&](const auto& node) {
        using T = std::decay_t<decltype(node)>;
        if constexpr (!std::is_same_v<T, Const> && !std::is_same_v<T, Ref>) {
          for (const Expr& a : node.args) freeze_erps(a, cell, fc);
        }
        if constexpr (std::is_same_v<T, ErpApp>) {
          bool random_args = false;
          for (const Expr& a : node.args) {
            random_args = random_args || is_stochastic(a, fc.random_cells, fc.registry);
          }
          VariationalFamily family = VariationalFamily::gaussian();
          std::optional<ErpParams> prior;
          if (!random_args) {
            ErpParams p{node.kind, {}};
            for (const Expr& a : node.args) p.args.push_back(eval_expr(a, fc.fixed, fc.eval).value);
            try {
              validate(p);
            } catch (const ParamError& err) {
              throw ParamError("at " + node.label.str() + ": " + err.what());
            }
            family = default_family(p);
            prior = std::move(p);
          } else if (node.kind == ErpKind::Between || node.kind == ErpKind::Choice) {
            throw UnsupportedModelError(
                "cell " + cell.str() + ": the parameters of " + std::string(erp_name(node.kind)) +
                std::string(" depend on random cells, so its variational support cannot be fixed"));
          }
          ParamVector lambda(family.dimension(), 0.0);
          if (fc.init == InitMode::MomentMatched && prior) {
            lambda = moment_matched_params(family, *prior);
          }
          fc.out.sum_sq[node.label].assign(family.dimension(), 0.0);
          fc.out.factors[node.label] = Proposal{std::move(family), std::move(lambda)};
        }
      },
      e.node);
}

[[noreturn]] void refuse_black_box() {
  throw GradientUnavailableError(
      "a stochastic black-box operator was sampled, so no gradient is available; "
      "use the SMC engine for this sheet");
}

}  // namespace

VariationalState init_state(const CompiledSheet& compiled, const BlackOpRegistry& registry,
                            InitMode init) {
  const std::set<CellRef> random_cells = probsheet::random_cells(compiled, registry);

  // Values of the cells that do not vary between runs. Observed cells always
  // evaluate to their datum.
  Rng unused(0);
  const ProposalOracle oracle = ProposalOracle::prior();
  const EvalContext ctx{oracle, registry, unused};
  State fixed;
  for (const CellRef& r : compiled.order) {
    if (random_cells.count(r)) continue;
    const Expr& f = compiled.formula(r);
    if (f.is<Actual>()) {
      fixed.bind(r, f.as<Actual>().datum);
    } else {
      bool inputs_fixed = true;
      for (const CellRef& dep : references_of(f)) inputs_fixed = inputs_fixed && fixed.contains(dep);
      if (inputs_fixed) fixed.bind(r, eval_expr(f, fixed, ctx).value);
    }
  }

  VariationalState state;
  FreezeContext fc{random_cells, registry, fixed, ctx, init, state};
  for (const CellRef& r : compiled.order) freeze_erps(compiled.formula(r), r, fc);
  return state;
}

GradientEstimate estimate_gradient(const CompiledSheet& compiled, const VariationalState& state,
                                   std::size_t samples, const BlackOpRegistry& registry,
                                   Rng& rng) {
  if (samples == 0) throw ConfigError("need at least one sample per gradient estimate");
  const ProposalOracle oracle = ProposalOracle::variational(state.factors);
  const EvalContext ctx{oracle, registry, rng};
  GradientEstimate est;
  double total = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    SheetRun run = run_sheet(compiled, ctx);
    if (run.bk.poisoned()) refuse_black_box();
    const double ratio = run.bk.p - run.bk.q;
    if (!std::isfinite(ratio)) continue;
    ++est.used;
    total += ratio;
    for (const auto& [label, g] : *run.bk.grads) {
      std::vector<double>& d = est.delta[label];
      d.resize(g.size(), 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * ratio;
      ++est.fired[label];
    }
  }
  for (auto& [label, d] : est.delta) {
    const double n = static_cast<double>(est.fired[label]);
    for (double& x : d) x /= n;
  }
  est.mean_log_ratio = est.used ? total / static_cast<double>(est.used)
                                : -std::numeric_limits<double>::infinity();
  return est;
}

double adagrad_step(VariationalState& state, const GradientEstimate& est, double gamma) {
  double norm_sq = 0;
  for (const auto& [label, d] : est.delta) {
    std::vector<double>& g = state.sum_sq.at(label);
    ParamVector& lambda = state.factors.at(label).lambda;
    if (d.size() != lambda.size()) {
      throw DimensionError("gradient for " + label.str() + " has the wrong dimension");
    }
    for (std::size_t i = 0; i < d.size(); ++i) {
      g[i] += d[i] * d[i];
      const double step = g[i] > 0 ? gamma * d[i] / std::sqrt(g[i]) : 0.0;
      lambda[i] += step;
      norm_sq += step * step;
    }
  }
  ++state.t;
  return std::sqrt(norm_sq);
}

double elbo_estimate(const CompiledSheet& compiled, const VariationalState& state,
                     std::size_t samples, const BlackOpRegistry& registry, Rng& rng) {
  if (samples == 0) throw ConfigError("need at least one sample for an ELBO estimate");
  const ProposalOracle oracle = ProposalOracle::variational(state.factors);
  const EvalContext ctx{oracle, registry, rng};
  double total = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    SheetRun run = run_sheet(compiled, ctx);
    total += run.bk.p - run.bk.q;
  }
  return total / static_cast<double>(samples);
}

void validate(const BbviConfig& config) {
  if (config.samples == 0) throw ConfigError("samples must be at least 1");
  if (config.max_iterations == 0) throw ConfigError("iterations must be at least 1");
  if (!(config.gamma > 0) || !std::isfinite(config.gamma)) {
    throw ConfigError("gamma must be positive");
  }
  if (!(config.epsilon > 0)) throw ConfigError("epsilon must be positive");
}

BbviResult run_bbvi(const CompiledSheet& compiled, const BbviConfig& config,
                    const BlackOpRegistry& registry, std::size_t grid_points) {
  validate(config);
  BbviResult result;
  result.state = init_state(compiled, registry, config.init);
  if (result.state.factors.empty()) {
    result.converged = true;
    return result;
  }

  while (result.state.t < config.max_iterations) {
    Rng rng = derive_stream(config.seed, {result.state.t});
    const GradientEstimate est =
        estimate_gradient(compiled, result.state, config.samples, registry, rng);
    double grad_sq = 0;
    for (const auto& [label, d] : est.delta) {
      for (double x : d) grad_sq += x * x;
    }
    TraceRow row;
    row.iteration = result.state.t + 1;
    row.elbo = est.mean_log_ratio;
    row.gradient_norm = std::sqrt(grad_sq);
    row.step_norm = adagrad_step(result.state, est, config.gamma);
    result.trace.push_back(row);
    if (est.used > 0 && row.step_norm < config.epsilon) {
      result.converged = true;
      break;
    }
  }
  result.iterations = result.state.t;

  for (const auto& [label, prop] : result.state.factors) {
    FactorSummary fs;
    fs.label = label;
    fs.family = prop.family;
    fs.lambda = prop.lambda;
    fs.moments = family_moments(prop.family, prop.lambda);
    fs.density = family_density_grid(prop.family, prop.lambda, grid_points);
    result.factors.push_back(std::move(fs));
  }
  return result;
}

std::vector<std::vector<double>> sample_fitted(const CompiledSheet& compiled,
                                               const VariationalState& state,
                                               const std::vector<CellRef>& cells,
                                               std::size_t draws, const BlackOpRegistry& registry,
                                               Rng& rng) {
  for (const CellRef& r : cells) {
    if (!compiled.sheet.count(r)) throw UnboundTargetError("cell " + r.str() + " is not in the sheet");
  }
  const ProposalOracle oracle = ProposalOracle::variational(state.factors);
  const EvalContext ctx{oracle, registry, rng};
  std::vector<std::vector<double>> out(cells.size());
  for (auto& column : out) column.reserve(draws);
  for (std::size_t n = 0; n < draws; ++n) {
    SheetRun run = run_sheet(compiled, ctx);
    for (std::size_t k = 0; k < cells.size(); ++k) out[k].push_back(run.state.at(cells[k]));
  }
  return out;
}

}  // namespace probsheet
