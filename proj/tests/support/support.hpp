#pragma once

#include <cstddef>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "probsheet/eval.hpp"
#include "probsheet/graph.hpp"
#include "probsheet/smc.hpp"

namespace probsheet::testing {

using Gen = std::mt19937_64;

Sheet make_sheet(const std::vector<std::pair<std::string, std::string>>& cells);
CompiledSheet compile(const std::vector<std::pair<std::string, std::string>>& cells);

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

double normal_pdf(double x, double mean, double sd);
double normal_logpdf(double x, double mean, double sd);

// Memoized recursive evaluation of a sheet holding no ERP or black-box
// application. ACTUAL cells evaluate to their datum.
std::map<CellRef, double> recursive_eval(const Sheet& sheet);

// Boolean reachability by Floyd-Warshall over the reference graph:
// reach[i][j] is true when cell i feeds (transitively) into cell j. Indices
// follow the sheet's key order.
std::vector<std::vector<bool>> transitive_closure(const Sheet& sheet);

bool has_cycle_oracle(const Sheet& sheet);

struct DecompositionOracle {
  std::vector<CellRef> observed;
  std::vector<std::vector<CellRef>> pred_blocks;
  std::vector<std::vector<CellRef>> frontier_blocks;
  std::vector<CellRef> residual;
  std::vector<CellRef> residual_frontier;
};

// The observation-indexed decomposition computed from the closure matrix
// alone; every set is sorted by `order`.
DecompositionOracle decomposition_oracle(const Sheet& sheet, const std::vector<CellRef>& order);

// A sheet of independent CHOICE latents observed through Gaussian actuals of
// linear combinations, with its exact joint posterior.
struct ChoiceModel {
  std::vector<std::pair<std::string, std::string>> cells;
  std::vector<CellRef> latents;
  std::vector<std::vector<double>> values;   // per latent
  std::vector<std::vector<double>> weights;  // per latent, unnormalized
  struct Obs {
    double datum;
    double sd;
    std::vector<double> coef;  // per latent
  };
  std::vector<Obs> observations;
};

ChoiceModel random_choice_model(Gen& gen);

// Exact posterior over joint configurations, keyed by the tuple of latent
// values.
std::map<std::vector<double>, double> enumerate_posterior(const ChoiceModel& m);

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

// Random DAG over up to `max_cells` cells scattered on a small grid. `names`
// lists the cells in a hidden dependency order that generally disagrees with
// CellRef order; parents[k] holds indices below k.
struct DagSpec {
  std::vector<std::string> names;
  std::vector<std::vector<std::size_t>> parents;
  std::vector<bool> observed;
};

DagSpec random_dag(Gen& gen, std::size_t max_cells);

// Observed cells become ACTUALs of a Gaussian centred on the sum of their
// parents; parentless latent cells are ERPs or constants.
std::vector<std::pair<std::string, std::string>> render(const DagSpec& dag);

// Adds one reference that closes a cycle through an existing path (or a
// self-loop).
DagSpec with_back_edge(Gen& gen, DagSpec dag);

// Random well-formed sheet mixing arithmetic, IF, ERPs and ACTUALs whose
// parameters are always valid.
std::vector<std::pair<std::string, std::string>> random_model_cells(Gen& gen,
                                                                    std::size_t max_cells);

// Random sheet without any random choice.
std::vector<std::pair<std::string, std::string>> random_deterministic_cells(Gen& gen,
                                                                            std::size_t max_cells);

// Bookkeeping with dyadic p, q so that sums are exact.
Bookkeeping random_bookkeeping(Gen& gen);

}  // namespace probsheet::testing

namespace probsheet::testing {

// Joint posterior over the given cells read off the weighted particles.
std::map<std::vector<double>, double> joint_posterior(const PosteriorMixture& mix,
                                                      const std::vector<CellRef>& cells);

double total_variation(const std::map<std::vector<double>, double>& a,
                       const std::map<std::vector<double>, double>& b);

}  // namespace probsheet::testing
