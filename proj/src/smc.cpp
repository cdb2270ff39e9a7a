#include "probsheet/smc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <optional>
#include <random>
#include <thread>

#include "probsheet/errors.hpp"
#include "probsheet/eval.hpp"

namespace probsheet {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const std::vector<double>& xs) {
  double hi = kNegInf;
  for (double x : xs) hi = std::max(hi, x);
  if (hi == kNegInf) return kNegInf;
  double sum = 0;
  for (double x : xs) sum += std::exp(x - hi);
  return hi + std::log(sum);
}

std::vector<std::size_t> positions_of(const CompiledSheet& compiled,
                                      const std::vector<CellRef>& cells) {
  std::vector<std::size_t> out;
  out.reserve(cells.size());
  for (const CellRef& r : cells) out.push_back(compiled.position(r));
  return out;
}

// Restores `frontier` into a fresh state, evaluates `block` in order and
// writes the new values back. Returns the log incremental weight.
double sweep_particle(const CompiledSheet& compiled, ParticleStore& store, std::size_t s,
                      const std::vector<CellRef>& frontier,
                      const std::vector<std::size_t>& frontier_pos,
                      const std::vector<CellRef>& block, const std::vector<std::size_t>& block_pos,
                      const EvalContext& ctx) {
  State rho;
  std::vector<double>& db = store.values[s];
  for (std::size_t k = 0; k < frontier.size(); ++k) rho.bind(frontier[k], db[frontier_pos[k]]);
  Bookkeeping bk;
  for (const CellRef& r : block) combine_into(bk, step_cell_into(compiled, rho, r, ctx));
  for (std::size_t k = 0; k < block.size(); ++k) db[block_pos[k]] = rho.at(block[k]);
  const double inc = bk.p - bk.q;
  return std::isnan(inc) ? kNegInf : inc;
}

void resample_in_place(ParticleStore& store, Rng& rng, const std::string& where) {
  const double hi = *std::max_element(store.log_weights.begin(), store.log_weights.end());
  if (hi == kNegInf || std::isnan(hi)) {
    throw AllZeroWeightsError("every particle has zero weight" + where);
  }
  std::vector<double> w(store.size());
  for (std::size_t s = 0; s < w.size(); ++s) w[s] = std::exp(store.log_weights[s] - hi);
  const double log_mean = store.log_mean_weight();

  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  std::vector<std::vector<double>> children(store.size());
  for (std::size_t s = 0; s < children.size(); ++s) children[s] = store.values[pick(rng)];
  store.values = std::move(children);
  std::fill(store.log_weights.begin(), store.log_weights.end(), log_mean);
}

}  // namespace

std::vector<std::size_t> island_sizes(std::size_t total, std::size_t islands) {
  if (islands < 1) throw ConfigError("need at least one island");
  if (total < islands) {
    throw ConfigError("cannot split " + std::to_string(total) + " particles into " +
                      std::to_string(islands) + " islands");
  }
  std::vector<std::size_t> sizes(islands, total / islands);
  sizes.back() += total % islands;
  return sizes;
}

ParticleStore::ParticleStore(std::size_t particles, std::size_t cells)
    : values(particles, std::vector<double>(cells, 0.0)),
      bound(cells, false),
      log_weights(particles, 0.0) {}

double ParticleStore::weight(std::size_t s) const { return std::exp(log_weights.at(s)); }

double ParticleStore::log_mean_weight() const {
  if (log_weights.empty()) return kNegInf;
  return log_sum_exp(log_weights) - std::log(static_cast<double>(log_weights.size()));
}

ParticleStore resample(const ParticleStore& store, Rng& rng) {
  if (store.size() == 0) throw AllZeroWeightsError("cannot resample an empty particle set");
  ParticleStore out = store;
  resample_in_place(out, rng, "");
  return out;
}

IslandResult run_island(const CompiledSheet& compiled, std::size_t particles,
                        const BlackOpRegistry& registry, Rng& rng) {
  if (particles == 0) throw ConfigError("an island needs at least one particle");
  ParticleStore store(particles, compiled.order.size());
  const ProposalOracle oracle = ProposalOracle::prior();
  const EvalContext ctx{oracle, registry, rng};

  auto mark_bound = [&](const std::vector<std::size_t>& pos) {
    for (std::size_t p : pos) store.bound[p] = true;
  };

  if (compiled.observed.empty()) {
    const std::vector<std::size_t> pos = positions_of(compiled, compiled.order);
    for (std::size_t s = 0; s < particles; ++s) {
      sweep_particle(compiled, store, s, {}, {}, compiled.order, pos, ctx);
    }
    mark_bound(pos);
    return IslandResult{std::move(store), 0.0};
  }

  for (std::size_t i = 0; i < compiled.observed.size(); ++i) {
    const std::vector<CellRef>& frontier = compiled.frontier_blocks[i];
    std::vector<CellRef> block = compiled.pred_blocks[i];
    block.push_back(compiled.observed[i]);
    const std::vector<std::size_t> frontier_pos = positions_of(compiled, frontier);
    const std::vector<std::size_t> block_pos = positions_of(compiled, block);
    for (std::size_t s = 0; s < particles; ++s) {
      const double inc =
          sweep_particle(compiled, store, s, frontier, frontier_pos, block, block_pos, ctx);
      double& lw = store.log_weights[s];
      lw += inc;
      if (std::isnan(lw)) lw = kNegInf;
    }
    mark_bound(block_pos);
    resample_in_place(store, rng, " at observation " + compiled.observed[i].str());
  }

  const std::vector<std::size_t> frontier_pos = positions_of(compiled, compiled.residual_frontier);
  const std::vector<std::size_t> residual_pos = positions_of(compiled, compiled.residual);
  for (std::size_t s = 0; s < particles; ++s) {
    sweep_particle(compiled, store, s, compiled.residual_frontier, frontier_pos, compiled.residual,
                   residual_pos, ctx);
  }
  mark_bound(residual_pos);

  const double log_z = store.log_mean_weight();
  return IslandResult{std::move(store), log_z};
}

std::size_t PosteriorMixture::position(const CellRef& r) const {
  auto it = std::find(cells.begin(), cells.end(), r);
  if (it == cells.end()) throw UnboundTargetError("cell " + r.str() + " is not in the sheet");
  return static_cast<std::size_t>(it - cells.begin());
}

std::vector<double> evidence_weights(const std::vector<double>& log_evidence) {
  const double norm = log_sum_exp(log_evidence);
  if (norm == kNegInf) throw AllZeroWeightsError("every island has zero evidence");
  std::vector<double> out;
  for (double lz : log_evidence) out.push_back(std::exp(lz - norm));
  return out;
}

PosteriorMixture run_smc(const CompiledSheet& compiled, const SmcConfig& config,
                         const BlackOpRegistry& registry) {
  const std::vector<std::size_t> sizes = island_sizes(config.particles, config.islands);
  const std::size_t m = sizes.size();
  std::vector<std::optional<IslandResult>> results(m);
  std::vector<std::exception_ptr> errors(m);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < m; j = next++) {
      try {
        Rng rng = derive_stream(config.seed, {j});
        results[j] = run_island(compiled, sizes[j], registry, rng);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  std::size_t threads = config.threads ? config.threads : std::thread::hardware_concurrency();
  threads = std::clamp<std::size_t>(threads, 1, m);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::exception_ptr first_failure;
  PosteriorMixture mix;
  mix.cells = compiled.order;
  for (std::size_t j = 0; j < m; ++j) {
    if (errors[j]) {
      try {
        std::rethrow_exception(errors[j]);
      } catch (const AllZeroWeightsError&) {
        if (!first_failure) first_failure = errors[j];
        mix.islands.push_back(IslandResult{ParticleStore{}, kNegInf});
      }
    } else {
      mix.islands.push_back(std::move(*results[j]));
    }
  }

  std::vector<double> log_z(m);
  std::vector<double> pooled(m);
  for (std::size_t j = 0; j < m; ++j) {
    log_z[j] = mix.islands[j].log_evidence;
    pooled[j] = log_z[j] + std::log(static_cast<double>(sizes[j]));
  }
  if (log_sum_exp(log_z) == kNegInf) std::rethrow_exception(first_failure);
  mix.island_weights = evidence_weights(log_z);
  mix.log_evidence = log_sum_exp(pooled) - std::log(static_cast<double>(config.particles));
  return mix;
}

std::vector<std::pair<double, double>> weighted_values(const PosteriorMixture& mix,
                                                       const CellRef& target) {
  const std::size_t pos = mix.position(target);
  std::vector<std::pair<double, double>> out;
  for (std::size_t j = 0; j < mix.islands.size(); ++j) {
    const ParticleStore& store = mix.islands[j].store;
    if (mix.island_weights[j] == 0.0 || store.size() == 0) continue;
    if (!store.bound[pos]) {
      throw UnboundTargetError("cell " + target.str() + " is not bound in the particle databases");
    }
    const double norm = log_sum_exp(store.log_weights);
    for (std::size_t s = 0; s < store.size(); ++s) {
      out.emplace_back(store.values[s][pos],
                       mix.island_weights[j] * std::exp(store.log_weights[s] - norm));
    }
  }
  return out;
}

Histogram weighted_histogram(const std::vector<std::pair<double, double>>& samples,
                             std::size_t bins) {
  if (bins == 0) throw ConfigError("histogram needs at least one bin");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  double total = 0;
  for (const auto& [x, w] : samples) {
    if (w <= 0) continue;
    lo = std::min(lo, x);
    hi = std::max(hi, x);
    total += w;
  }
  if (!(total > 0)) throw UnboundTargetError("no weighted samples to summarize");

  Histogram h;
  const std::size_t nbins = lo == hi ? 1 : bins;
  h.edges.resize(nbins + 1);
  for (std::size_t k = 0; k <= nbins; ++k) {
    h.edges[k] = k == nbins ? hi : lo + (hi - lo) * static_cast<double>(k) / nbins;
  }
  h.masses.assign(nbins, 0.0);
  double mean = 0;
  for (const auto& [x, w] : samples) {
    if (w <= 0) continue;
    std::size_t k = 0;
    if (nbins > 1) {
      k = static_cast<std::size_t>((x - lo) / (hi - lo) * static_cast<double>(nbins));
      k = std::min(k, nbins - 1);
    }
    h.masses[k] += w / total;
    mean += w * x;
  }
  mean /= total;
  double var = 0;
  for (const auto& [x, w] : samples) {
    if (w > 0) var += w * (x - mean) * (x - mean);
  }
  h.mean = mean;
  h.stddev = std::sqrt(var / total);
  return h;
}

Histogram posterior_histogram(const PosteriorMixture& mix, const CellRef& target,
                              std::size_t bins) {
  return weighted_histogram(weighted_values(mix, target), bins);
}

}  // namespace probsheet
