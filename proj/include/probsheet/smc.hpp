#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "probsheet/blackbox.hpp"
#include "probsheet/graph.hpp"
#include "probsheet/rng.hpp"

namespace probsheet {

// Throws ConfigError unless K >= M >= 1. The last island absorbs K mod M.
std::vector<std::size_t> island_sizes(std::size_t total, std::size_t islands);

// Particle databases of one island. Values are indexed by position in the
// compiled evaluation order; every particle binds the same set of cells at any
// point of the algorithm, so the bound mask is shared.
struct ParticleStore {
  std::vector<std::vector<double>> values;
  std::vector<bool> bound;
  std::vector<double> log_weights;

  ParticleStore() = default;
  ParticleStore(std::size_t particles, std::size_t cells);

  std::size_t size() const { return log_weights.size(); }
  double weight(std::size_t s) const;
  // Mean of the unnormalized weights, in log space.
  double log_mean_weight() const;
};

// Multinomial resampling: S categorical draws from the normalized weights.
// Every child copies its parent's database and takes the pre-resample mean
// weight. Throws AllZeroWeightsError when every weight is zero.
ParticleStore resample(const ParticleStore& store, Rng& rng);

struct IslandResult {
  ParticleStore store;
  double log_evidence = 0;
};

// One particle filter over the observation blocks of `compiled`. Sheets
// without observations are forward-simulated with unit weights.
IslandResult run_island(const CompiledSheet& compiled, std::size_t particles,
                        const BlackOpRegistry& registry, Rng& rng);

struct SmcConfig {
  std::size_t particles = 5000;
  std::size_t islands = 10;
  std::uint64_t seed = 0;
  // 0 picks std::thread::hardware_concurrency(). Results do not depend on it.
  std::size_t threads = 0;
};

struct PosteriorMixture {
  std::vector<CellRef> cells;  // evaluation order, indexes particle values
  std::vector<IslandResult> islands;
  std::vector<double> island_weights;  // proportional to each island's evidence
  double log_evidence = 0;             // particle-count-weighted pooled estimate

  std::size_t position(const CellRef& r) const;
};

// Normalized island weights proportional to exp(log_evidence). Throws
// AllZeroWeightsError when every evidence is zero.
std::vector<double> evidence_weights(const std::vector<double>& log_evidence);

// Runs the islands, each on derive_stream(seed, {j}). An island whose weights
// all vanish gets weight 0; the error is rethrown only if every island fails.
PosteriorMixture run_smc(const CompiledSheet& compiled, const SmcConfig& config,
                         const BlackOpRegistry& registry);

// (value, normalized weight) pairs over all particles of a target cell.
// Throws UnboundTargetError.
std::vector<std::pair<double, double>> weighted_values(const PosteriorMixture& mix,
                                                       const CellRef& target);

struct Histogram {
  std::vector<double> edges;  // bins + 1 entries
  std::vector<double> masses;
  double mean = 0;
  double stddev = 0;
};

// Equal-width bins over [min, max] of the particle values; a single bin when
// all values coincide.
Histogram posterior_histogram(const PosteriorMixture& mix, const CellRef& target,
                              std::size_t bins);

Histogram weighted_histogram(const std::vector<std::pair<double, double>>& samples,
                             std::size_t bins);

}  // namespace probsheet
