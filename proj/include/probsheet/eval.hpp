#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "probsheet/blackbox.hpp"
#include "probsheet/cell_ref.hpp"
#include "probsheet/dist.hpp"
#include "probsheet/graph.hpp"
#include "probsheet/rng.hpp"

namespace probsheet {

using GradientMap = std::map<Label, std::vector<double>>;

// (p, q, Λ, L): target log density, proposal log density, per-label proposal
// gradients, and the labels sampled, in evaluation order. An empty `grads`
// optional is the absorbing "no gradient information" value produced by
// stochastic black-box operators.
struct Bookkeeping {
  double p = 0;
  double q = 0;
  std::optional<GradientMap> grads = GradientMap{};
  std::vector<Label> labels;

  bool poisoned() const { return !grads.has_value(); }
  static Bookkeeping bottom() {
    Bookkeeping b;
    b.grads.reset();
    return b;
  }
  friend bool operator==(const Bookkeeping&, const Bookkeeping&) = default;
};

// p and q add, labels concatenate, gradient maps merge with the left operand
// winning on shared labels, and a poisoned side poisons the result.
Bookkeeping combine(const Bookkeeping& a, const Bookkeeping& b);
// In-place form: acc = acc ⊕ b.
void combine_into(Bookkeeping& acc, Bookkeeping b);

// Partial assignment of values to cells.
class State {
 public:
  bool contains(const CellRef& r) const { return bindings_.count(r) != 0; }
  // Throws UnboundRefError.
  double at(const CellRef& r) const;
  // Throws AlreadyBoundError.
  void bind(const CellRef& r, double value);
  std::size_t size() const { return bindings_.size(); }
  const std::map<CellRef, double>& bindings() const { return bindings_; }

  // True when every cell preceding a bound cell in `order` is bound too.
  bool downward_closed(const std::vector<CellRef>& order) const;

  friend bool operator==(const State&, const State&) = default;

 private:
  std::map<CellRef, double> bindings_;
};

struct Proposal {
  VariationalFamily family;
  ParamVector lambda;
};

using ProposalMap = std::map<Label, Proposal>;

// Where ERP draws come from: the prior itself, or a per-label variational
// factor.
class ProposalOracle {
 public:
  static ProposalOracle prior() { return ProposalOracle(nullptr); }
  static ProposalOracle variational(const ProposalMap& proposals) {
    return ProposalOracle(&proposals);
  }

  bool is_prior() const { return proposals_ == nullptr; }
  // Throws UnsupportedModelError when the label has no factor.
  const Proposal& lookup(const Label& l) const;

 private:
  explicit ProposalOracle(const ProposalMap* proposals) : proposals_(proposals) {}
  const ProposalMap* proposals_;
};

struct EvalContext {
  const ProposalOracle& oracle;
  const BlackOpRegistry& registry;
  Rng& rng;
};

struct Evaluation {
  double value = 0;
  Bookkeeping bk;
};

// One expression under state `rho`. Arguments are evaluated left to right;
// IF evaluates exactly one branch.
Evaluation eval_expr(const Expr& e, const State& rho, const EvalContext& ctx);

struct StepResult {
  State state;
  Bookkeeping bk;
};

// Evaluates the formula of `r` and returns rho extended with its value.
// Throws AlreadyBoundError if r is bound, UnboundRefError if an input is not.
StepResult step_cell(const CompiledSheet& compiled, State rho, const CellRef& r,
                     const EvalContext& ctx);

// In-place variant used by the inference loops.
Bookkeeping step_cell_into(const CompiledSheet& compiled, State& rho, const CellRef& r,
                           const EvalContext& ctx);

struct SheetRun {
  State state;
  Bookkeeping bk;
  std::size_t steps = 0;
};

// Steps every cell in topological order from the empty state.
SheetRun run_sheet(const CompiledSheet& compiled, const EvalContext& ctx);

// True when the value of `e` can vary between runs: it applies an ERP or a
// stochastic black-box operator, or reads a cell in `random_cells`. An ACTUAL
// always evaluates to its datum.
bool is_stochastic(const Expr& e, const std::set<CellRef>& random_cells,
                   const BlackOpRegistry& registry);

// Cells whose value depends on a random choice.
std::set<CellRef> random_cells(const CompiledSheet& compiled, const BlackOpRegistry& registry);

}  // namespace probsheet
