#include "probsheet/eval.hpp"

#include <cmath>
#include <set>
#include <string>

#include "probsheet/errors.hpp"

namespace probsheet {

namespace {

template <typename E>
[[noreturn]] void rethrow_with(const E& e, const Label& label) {
  throw E("at " + label.str() + ": " + e.what());
}

ErpParams evaluate_params(ErpKind kind, const std::vector<double>& args) {
  return ErpParams{kind, args};
}

struct ArgValues {
  std::vector<double> values;
  Bookkeeping bk;
};

ArgValues eval_args(const std::vector<Expr>& args, const State& rho, const EvalContext& ctx) {
  ArgValues out;
  out.values.reserve(args.size());
  for (const Expr& a : args) {
    Evaluation ev = eval_expr(a, rho, ctx);
    out.values.push_back(ev.value);
    combine_into(out.bk, std::move(ev.bk));
  }
  return out;
}

Evaluation eval_erp(const ErpApp& node, const State& rho, const EvalContext& ctx) {
  ArgValues args = eval_args(node.args, rho, ctx);
  const ErpParams prior = evaluate_params(node.kind, args.values);
  Bookkeeping own;
  own.labels.push_back(node.label);
  double c = 0;
  try {
    if (ctx.oracle.is_prior()) {
      c = sample_erp(prior, ctx.rng);
      own.p = score_erp(prior, c);
      own.q = own.p;
    } else {
      const Proposal& prop = ctx.oracle.lookup(node.label);
      c = sample_q(prop.family, prop.lambda, ctx.rng);
      own.p = score_erp(prior, c);
      own.q = score_q(prop.family, prop.lambda, c);
      if (own.grads) (*own.grads)[node.label] = grad_log_q(prop.family, prop.lambda, c);
    }
  } catch (const ParamError& e) {
    rethrow_with(e, node.label);
  } catch (const DimensionError& e) {
    rethrow_with(e, node.label);
  } catch (const SupportError& e) {
    rethrow_with(e, node.label);
  }
  combine_into(args.bk, std::move(own));
  return Evaluation{c, std::move(args.bk)};
}

Evaluation eval_actual(const Actual& node, const State& rho, const EvalContext& ctx) {
  ArgValues args = eval_args(node.args, rho, ctx);
  const ErpParams model = evaluate_params(node.erp, args.values);
  Bookkeeping own;
  try {
    own.p = score_erp(model, node.datum);
  } catch (const ParamError& e) {
    rethrow_with(e, node.label);
  }
  own.labels.push_back(node.label);
  combine_into(args.bk, std::move(own));
  return Evaluation{node.datum, std::move(args.bk)};
}

Evaluation eval_black(const BlackApp& node, const State& rho, const EvalContext& ctx) {
  const BlackOpDef* def = ctx.registry.find(node.name);
  if (!def) {
    throw UnknownFunctionError("at " + node.label.str() + ": unknown function '" + node.name +
                               "'");
  }
  ArgValues args = eval_args(node.args, rho, ctx);
  double c = 0;
  try {
    c = def->fn(args.values, ctx.rng);
  } catch (const NoRootError& e) {
    rethrow_with(e, node.label);
  } catch (const DomainError& e) {
    rethrow_with(e, node.label);
  } catch (const ArityError& e) {
    rethrow_with(e, node.label);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error("at " + node.label.str() + ": " + node.name + " failed: " + e.what());
  }
  if (def->deterministic) return Evaluation{c, std::move(args.bk)};
  Bookkeeping out = std::move(args.bk);
  out.grads.reset();
  out.labels.push_back(node.label);
  return Evaluation{c, std::move(out)};
}

}  // namespace

bool is_stochastic(const Expr& e, const std::set<CellRef>& random_cells,
                   const BlackOpRegistry& registry) {
  return std::visit(
      [&](const auto& node) -> bool {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, Const>) {
          return false;
        } else if constexpr (std::is_same_v<T, Ref>) {
          return random_cells.count(node.ref) != 0;
        } else if constexpr (std::is_same_v<T, ErpApp>) {
          return true;
        } else if constexpr (std::is_same_v<T, Actual>) {
          return false;
        } else {
          if constexpr (std::is_same_v<T, BlackApp>) {
            const BlackOpDef* def = registry.find(node.name);
            if (def && !def->deterministic) return true;
          }
          for (const Expr& a : node.args) {
            if (is_stochastic(a, random_cells, registry)) return true;
          }
          return false;
        }
      },
      e.node);
}

std::set<CellRef> random_cells(const CompiledSheet& compiled, const BlackOpRegistry& registry) {
  std::set<CellRef> out;
  for (const CellRef& r : compiled.order) {
    if (is_stochastic(compiled.formula(r), out, registry)) out.insert(r);
  }
  return out;
}

Bookkeeping combine(const Bookkeeping& a, const Bookkeeping& b) {
  Bookkeeping out = a;
  combine_into(out, b);
  return out;
}

void combine_into(Bookkeeping& acc, Bookkeeping b) {
  acc.p += b.p;
  acc.q += b.q;
  if (!acc.grads || !b.grads) {
    acc.grads.reset();
  } else {
    // insert() keeps existing keys, which gives the left operand priority.
    acc.grads->insert(std::make_move_iterator(b.grads->begin()),
                      std::make_move_iterator(b.grads->end()));
  }
  acc.labels.insert(acc.labels.end(), b.labels.begin(), b.labels.end());
}

double State::at(const CellRef& r) const {
  auto it = bindings_.find(r);
  if (it == bindings_.end()) throw UnboundRefError("cell " + r.str() + " has no value yet");
  return it->second;
}

void State::bind(const CellRef& r, double value) {
  if (!bindings_.emplace(r, value).second) {
    throw AlreadyBoundError("cell " + r.str() + " is already evaluated");
  }
}

bool State::downward_closed(const std::vector<CellRef>& order) const {
  bool gap = false;
  for (const CellRef& r : order) {
    if (!contains(r)) {
      gap = true;
    } else if (gap) {
      return false;
    }
  }
  return true;
}

const Proposal& ProposalOracle::lookup(const Label& l) const {
  auto it = proposals_->find(l);
  if (it == proposals_->end()) {
    throw UnsupportedModelError("no variational factor for random choice " + l.str());
  }
  return it->second;
}

Evaluation eval_expr(const Expr& e, const State& rho, const EvalContext& ctx) {
  return std::visit(
      [&](const auto& node) -> Evaluation {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, Const>) {
          return Evaluation{node.value, {}};
        } else if constexpr (std::is_same_v<T, Ref>) {
          return Evaluation{rho.at(node.ref), {}};
        } else if constexpr (std::is_same_v<T, PrimApp>) {
          ArgValues args = eval_args(node.args, rho, ctx);
          return Evaluation{apply_prim(node.op, args.values), std::move(args.bk)};
        } else if constexpr (std::is_same_v<T, BlackApp>) {
          return eval_black(node, rho, ctx);
        } else if constexpr (std::is_same_v<T, ErpApp>) {
          return eval_erp(node, rho, ctx);
        } else if constexpr (std::is_same_v<T, If>) {
          Evaluation cond = eval_expr(node.condition(), rho, ctx);
          Evaluation branch =
              eval_expr(cond.value != 0.0 ? node.then_branch() : node.else_branch(), rho, ctx);
          combine_into(cond.bk, std::move(branch.bk));
          return Evaluation{branch.value, std::move(cond.bk)};
        } else {
          return eval_actual(node, rho, ctx);
        }
      },
      e.node);
}

Bookkeeping step_cell_into(const CompiledSheet& compiled, State& rho, const CellRef& r,
                           const EvalContext& ctx) {
  if (rho.contains(r)) throw AlreadyBoundError("cell " + r.str() + " is already evaluated");
  Evaluation ev = eval_expr(compiled.formula(r), rho, ctx);
  rho.bind(r, ev.value);
  return std::move(ev.bk);
}

StepResult step_cell(const CompiledSheet& compiled, State rho, const CellRef& r,
                     const EvalContext& ctx) {
  Bookkeeping bk = step_cell_into(compiled, rho, r, ctx);
  return StepResult{std::move(rho), std::move(bk)};
}

SheetRun run_sheet(const CompiledSheet& compiled, const EvalContext& ctx) {
  SheetRun run;
  for (const CellRef& r : compiled.order) {
    combine_into(run.bk, step_cell_into(compiled, run.state, r, ctx));
    ++run.steps;
  }
  return run;
}

}  // namespace probsheet
