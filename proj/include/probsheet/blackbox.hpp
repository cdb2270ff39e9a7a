#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "probsheet/graph.hpp"
#include "probsheet/rng.hpp"

namespace probsheet {

using BlackFn = std::function<double(std::span<const double>, Rng&)>;

// A user-supplied operator callable from formulas by name. Deterministic ops
// must ignore the random stream.
struct BlackOpDef {
  std::string name;
  std::optional<std::size_t> arity;  // nullopt = variadic
  bool deterministic = true;
  BlackFn fn;
};

class BlackOpRegistry {
 public:
  // Throws ReservedNameError for language names and DuplicateNameError for
  // repeats.
  void register_op(BlackOpDef def);

  const BlackOpDef* find(const std::string& name) const;
  const BlackOpDef& at(const std::string& name) const;
  std::vector<std::string> names() const;

  // Registry holding the builtin financial ops IRR and NPV.
  static BlackOpRegistry with_builtins();

 private:
  std::map<std::string, BlackOpDef> ops_;
};

// Checks every black-box application in the sheet against the registry.
// Throws UnknownFunctionError or ArityError.
void validate_black_ops(const Sheet& sheet, const BlackOpRegistry& registry);

// Net present value: sum_t cashflows[t] / (1 + rate)^t, t from 0.
// Throws DomainError for rate <= -1.
double npv(double rate, std::span<const double> cashflows);

// Internal rate of return: the smallest rate in [-0.9999, 10] where NPV
// changes sign (scanned at step 0.01), refined by bisection to |NPV| < 1e-10.
// Throws NoRootError when the scan finds no sign change.
double irr(std::span<const double> cashflows);

}  // namespace probsheet
