#include "probsheet/blackbox.hpp"

#include <cmath>

#include "probsheet/errors.hpp"

namespace probsheet {

namespace {

constexpr double kIrrLow = -0.9999;
constexpr double kIrrHigh = 10.0;
constexpr double kIrrScanStep = 0.01;
constexpr double kIrrTolerance = 1e-10;

void check_black_apps(const Expr& e, const BlackOpRegistry& registry, const CellRef& cell) {
  std::visit(
      [&](const auto& node) {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, BlackApp>) {
          const BlackOpDef* def = registry.find(node.name);
          if (!def) {
            throw UnknownFunctionError("cell " + cell.str() + ": unknown function '" +
                                       node.name + "'");
          }
          if (def->arity && *def->arity != node.args.size()) {
            throw ArityError("cell " + cell.str() + ": " + node.name + " takes " +
                             std::to_string(*def->arity) + " arguments, got " +
                             std::to_string(node.args.size()));
          }
        }
        if constexpr (!std::is_same_v<T, Const> && !std::is_same_v<T, Ref>) {
          for (const auto& a : node.args) check_black_apps(a, registry, cell);
        }
      },
      e.node);
}

}  // namespace

void BlackOpRegistry::register_op(BlackOpDef def) {
  if (is_reserved_name(def.name)) {
    throw ReservedNameError("'" + def.name + "' is a reserved name");
  }
  if (ops_.count(def.name)) {
    throw DuplicateNameError("black-box operator '" + def.name + "' is already registered");
  }
  if (!def.fn) throw ParamError("black-box operator '" + def.name + "' has no function");
  std::string name = def.name;
  ops_.emplace(std::move(name), std::move(def));
}

const BlackOpDef* BlackOpRegistry::find(const std::string& name) const {
  auto it = ops_.find(name);
  return it == ops_.end() ? nullptr : &it->second;
}

const BlackOpDef& BlackOpRegistry::at(const std::string& name) const {
  if (const BlackOpDef* def = find(name)) return *def;
  throw UnknownFunctionError("unknown function '" + name + "'");
}

std::vector<std::string> BlackOpRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, def] : ops_) out.push_back(name);
  return out;
}

BlackOpRegistry BlackOpRegistry::with_builtins() {
  BlackOpRegistry r;
  r.register_op(BlackOpDef{"IRR", std::nullopt, true,
                           [](std::span<const double> args, Rng&) { return irr(args); }});
  r.register_op(BlackOpDef{"NPV", std::nullopt, true,
                           [](std::span<const double> args, Rng&) {
                             if (args.empty()) throw ArityError("NPV needs a rate");
                             return npv(args[0], args.subspan(1));
                           }});
  return r;
}

void validate_black_ops(const Sheet& sheet, const BlackOpRegistry& registry) {
  for (const auto& [cell, expr] : sheet) check_black_apps(expr, registry, cell);
}

double npv(double rate, std::span<const double> cashflows) {
  if (!(rate > -1.0)) throw DomainError("NPV requires rate > -1, got " + format_number(rate));
  double total = 0;
  double discount = 1.0;
  for (double cf : cashflows) {
    total += cf / discount;
    discount *= 1.0 + rate;
  }
  return total;
}

double irr(std::span<const double> cashflows) {
  if (cashflows.empty()) throw NoRootError("IRR: no cashflows");
  auto f = [&](double r) { return npv(r, cashflows); };
  const auto steps = static_cast<int>(std::ceil((kIrrHigh - kIrrLow) / kIrrScanStep));
  double lo = kIrrLow;
  double f_lo = f(lo);
  if (f_lo == 0.0) return lo;
  for (int k = 1; k <= steps; ++k) {
    const double hi = std::min(kIrrHigh, kIrrLow + k * kIrrScanStep);
    const double f_hi = f(hi);
    if (f_hi == 0.0) return hi;
    if ((f_lo < 0) != (f_hi < 0)) {
      double a = lo;
      double b = hi;
      double fa = f_lo;
      for (;;) {
        const double mid = 0.5 * (a + b);
        const double fm = f(mid);
        if (std::abs(fm) < kIrrTolerance || mid == a || mid == b) return mid;
        if ((fa < 0) == (fm < 0)) {
          a = mid;
          fa = fm;
        } else {
          b = mid;
        }
      }
    }
    lo = hi;
    f_lo = f_hi;
  }
  throw NoRootError("IRR: NPV has no sign change on [-0.9999, 10]");
}

}  // namespace probsheet
