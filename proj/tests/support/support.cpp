#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>

#include "probsheet/formula.hpp"

namespace probsheet::testing {

namespace {

using Cells = std::vector<std::pair<std::string, std::string>>;

std::size_t pick(Gen& gen, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(gen);
}

bool coin(Gen& gen, double p) { return std::bernoulli_distribution(p)(gen); }

std::vector<std::string> grid_names(Gen& gen, std::size_t n, std::size_t columns,
                                    std::size_t rows) {
  std::vector<std::string> all;
  for (std::size_t c = 0; c < columns; ++c) {
    for (std::size_t r = 1; r <= rows; ++r) all.push_back(std::string(1, char('A' + c)) + std::to_string(r));
  }
  std::shuffle(all.begin(), all.end(), gen);
  all.resize(n);
  return all;
}

std::string num(double x) {
  std::string s = format_number(x);
  return x < 0 ? "(" + s + ")" : s;
}

double dyadic(Gen& gen, int range) {
  return std::uniform_int_distribution<int>(-range, range)(gen) / 8.0;
}

// Formula generator over earlier cells. ERP parameters are built so they are
// valid whatever the referenced values are.
struct ExprGen {
  Gen& gen;
  const std::vector<std::string>& earlier;
  bool random;

  std::string atom() {
    if (!earlier.empty() && coin(gen, 0.6)) return earlier[pick(gen, earlier.size())];
    return num(dyadic(gen, 24));
  }

  std::string expr(int depth) {
    if (depth <= 0) return atom();
    const int choices = random ? 16 : 12;
    switch (std::uniform_int_distribution<int>(0, choices - 1)(gen)) {
      case 0:
        return atom();
      case 1:
        return "(" + expr(depth - 1) + "+" + expr(depth - 1) + ")";
      case 2:
        return "(" + expr(depth - 1) + "-" + expr(depth - 1) + ")";
      case 3:
        return "(" + expr(depth - 1) + "*" + expr(depth - 1) + ")";
      case 4:
        return "(" + expr(depth - 1) + "/(ABS(" + expr(depth - 1) + ")+1))";
      case 5:
        return "MIN(" + expr(depth - 1) + "," + expr(depth - 1) + "," + atom() + ")";
      case 6:
        return "MAX(" + expr(depth - 1) + "," + atom() + ")";
      case 7:
        return "LOG(ABS(" + expr(depth - 1) + ")+1)";
      case 8:
        return "SQRT(ABS(" + expr(depth - 1) + "))";
      case 9:
        return "IF(" + expr(depth - 1) + (coin(gen, 0.5) ? ">" : "<=") + expr(depth - 1) + "," +
               expr(depth - 1) + "," + expr(depth - 1) + ")";
      case 10:
        return "-" + atom() + "^2";
      case 11:
        return "EXP(MIN(" + expr(depth - 1) + ",3))";
      case 12:
        return "GAUSSIAN(" + expr(depth - 1) + ",ABS(" + atom() + ")+0.5)";
      case 13: {
        const std::string lo = atom();
        return "BETWEEN(" + lo + "," + lo + "+ABS(" + atom() + ")+0.5)";
      }
      case 14:
        return "CHOICE(" + expr(depth - 1) + ",0.25," + atom() + ",0.75)";
      default:
        return "NEAR(ABS(" + atom() + ")+1)";
    }
  }
};

Cells random_cells(Gen& gen, std::size_t max_cells, bool random) {
  const std::size_t n = 1 + pick(gen, max_cells);
  const std::vector<std::string> names = grid_names(gen, n, 8, 10);
  Cells cells;
  std::vector<std::string> earlier;
  for (const std::string& name : names) {
    ExprGen eg{gen, earlier, random};
    const int depth = std::uniform_int_distribution<int>(0, 3)(gen);
    if (random && coin(gen, 0.2)) {
      cells.emplace_back(name, "=ACTUAL(" + format_number(dyadic(gen, 16)) +
                                   ", GAUSSIAN, MIN(MAX(" + eg.expr(depth) + ",-1000),1000), 1.5)");
    } else if (depth == 0 && coin(gen, 0.5)) {
      cells.emplace_back(name, format_number(dyadic(gen, 24)));
    } else {
      cells.emplace_back(name, "=MIN(MAX(" + eg.expr(depth) + ",-1000),1000)");
    }
    earlier.push_back(name);
  }
  return cells;
}

}  // namespace

Sheet make_sheet(const std::vector<std::pair<std::string, std::string>>& cells) {
  Sheet sheet;
  for (const auto& [name, text] : cells) {
    const CellRef r = CellRef::from_string(name);
    sheet.emplace(r, parse_cell(r, text));
  }
  return sheet;
}

CompiledSheet compile(const std::vector<std::pair<std::string, std::string>>& cells) {
  return compile_sheet(make_sheet(cells));
}

double normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2 * std::numbers::pi));
}

double normal_logpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2 * std::numbers::pi);
}

std::map<CellRef, double> recursive_eval(const Sheet& sheet) {
  std::map<CellRef, double> memo;
  std::function<double(const Expr&)> eval;
  std::function<double(const CellRef&)> cell = [&](const CellRef& r) {
    if (auto it = memo.find(r); it != memo.end()) return it->second;
    const double v = eval(sheet.at(r));
    memo[r] = v;
    return v;
  };
  eval = [&](const Expr& e) -> double {
    if (e.is<Const>()) return e.as<Const>().value;
    if (e.is<Ref>()) return cell(e.as<Ref>().ref);
    if (e.is<Actual>()) return e.as<Actual>().datum;
    if (e.is<If>()) {
      const If& f = e.as<If>();
      return eval(f.condition()) != 0 ? eval(f.then_branch()) : eval(f.else_branch());
    }
    if (!e.is<PrimApp>()) throw std::logic_error("recursive_eval: random node");
    const PrimApp& p = e.as<PrimApp>();
    std::vector<double> a;
    for (const Expr& x : p.args) a.push_back(eval(x));
    switch (p.op) {
      case PrimOp::Add:
        return a[0] + a[1];
      case PrimOp::Sub:
        return a[0] - a[1];
      case PrimOp::Mul:
        return a[0] * a[1];
      case PrimOp::Div:
        return a[0] / a[1];
      case PrimOp::Pow:
        return std::pow(a[0], a[1]);
      case PrimOp::Neg:
        return -a[0];
      case PrimOp::Log:
        return std::log(a[0]);
      case PrimOp::Exp:
        return std::exp(a[0]);
      case PrimOp::Sqrt:
        return std::sqrt(a[0]);
      case PrimOp::Abs:
        return std::fabs(a[0]);
      case PrimOp::Min: {
        double m = a[0];
        for (double x : a) m = x < m ? x : m;
        return m;
      }
      case PrimOp::Max: {
        double m = a[0];
        for (double x : a) m = x > m ? x : m;
        return m;
      }
      case PrimOp::Less:
        return a[0] < a[1] ? 1 : 0;
      case PrimOp::LessEq:
        return a[0] <= a[1] ? 1 : 0;
      case PrimOp::Greater:
        return a[0] > a[1] ? 1 : 0;
      case PrimOp::GreaterEq:
        return a[0] >= a[1] ? 1 : 0;
      case PrimOp::Equal:
        return a[0] == a[1] ? 1 : 0;
    }
    throw std::logic_error("recursive_eval: unknown op");
  };
  for (const auto& [r, e] : sheet) cell(r);
  return memo;
}

std::vector<std::vector<bool>> transitive_closure(const Sheet& sheet) {
  std::vector<CellRef> keys;
  for (const auto& [r, e] : sheet) keys.push_back(r);
  const std::size_t n = keys.size();
  auto idx = [&](const CellRef& r) {
    return static_cast<std::size_t>(std::lower_bound(keys.begin(), keys.end(), r) - keys.begin());
  };
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (const auto& [r, e] : sheet) {
    for (const CellRef& dep : references_of(e)) reach[idx(dep)][idx(r)] = true;
  }
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!reach[i][k]) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (reach[k][j]) reach[i][j] = true;
      }
    }
  }
  return reach;
}

bool has_cycle_oracle(const Sheet& sheet) {
  const auto reach = transitive_closure(sheet);
  for (std::size_t i = 0; i < reach.size(); ++i) {
    if (reach[i][i]) return true;
  }
  return false;
}

DecompositionOracle decomposition_oracle(const Sheet& sheet, const std::vector<CellRef>& order) {
  std::vector<CellRef> keys;
  for (const auto& [r, e] : sheet) keys.push_back(r);
  const std::size_t n = keys.size();
  auto idx = [&](const CellRef& r) {
    return static_cast<std::size_t>(std::lower_bound(keys.begin(), keys.end(), r) - keys.begin());
  };
  const auto reach = transitive_closure(sheet);
  std::vector<std::vector<bool>> edge(n, std::vector<bool>(n, false));
  for (const auto& [r, e] : sheet) {
    for (const CellRef& dep : references_of(e)) edge[idx(dep)][idx(r)] = true;
  }

  auto frontier_of = [&](const std::vector<bool>& in_set) {
    std::vector<CellRef> out;
    for (const CellRef& u : order) {
      if (in_set[idx(u)]) continue;
      for (std::size_t w = 0; w < n; ++w) {
        if (in_set[w] && edge[idx(u)][w]) {
          out.push_back(u);
          break;
        }
      }
    }
    return out;
  };

  DecompositionOracle d;
  for (const CellRef& r : order) {
    if (sheet.at(r).is<Actual>()) d.observed.push_back(r);
  }
  std::vector<bool> assigned(n, false);
  for (const CellRef& o : d.observed) {
    std::vector<bool> block(n, false);
    std::vector<CellRef> members;
    for (const CellRef& v : order) {
      if (reach[idx(v)][idx(o)] && !assigned[idx(v)]) {
        block[idx(v)] = true;
        members.push_back(v);
      }
    }
    std::vector<bool> closed = block;
    closed[idx(o)] = true;
    d.pred_blocks.push_back(members);
    d.frontier_blocks.push_back(frontier_of(closed));
    for (std::size_t k = 0; k < n; ++k) assigned[k] = assigned[k] || closed[k];
  }
  std::vector<bool> rest(n, false);
  for (const CellRef& v : order) {
    if (!assigned[idx(v)]) {
      rest[idx(v)] = true;
      d.residual.push_back(v);
    }
  }
  d.residual_frontier = frontier_of(rest);
  return d;
}

ChoiceModel random_choice_model(Gen& gen) {
  ChoiceModel m;
  std::size_t configs = 1;
  const std::size_t k = 1 + pick(gen, 5);
  for (std::size_t j = 0; j < k; ++j) {
    std::size_t arity = configs * 3 <= 32 && coin(gen, 0.3) ? 3 : 2;
    if (configs * arity > 32) break;
    configs *= arity;
    std::vector<double> vals;
    while (vals.size() < arity) {
      const double v = std::uniform_int_distribution<int>(-3, 3)(gen);
      if (std::find(vals.begin(), vals.end(), v) == vals.end()) vals.push_back(v);
    }
    std::vector<double> ws;
    for (std::size_t a = 0; a < arity; ++a) ws.push_back(std::uniform_int_distribution<int>(1, 8)(gen) / 8.0);
    const std::string name = "A" + std::to_string(j + 1);
    std::string f = "=CHOICE(";
    for (std::size_t a = 0; a < arity; ++a) {
      f += (a ? ", " : "") + format_number(vals[a]) + ", " + format_number(ws[a]);
    }
    m.cells.emplace_back(name, f + ")");
    m.latents.push_back(CellRef::from_string(name));
    m.values.push_back(vals);
    m.weights.push_back(ws);
  }

  // Data drawn from the model itself at a random configuration.
  std::vector<double> truth;
  for (std::size_t j = 0; j < m.latents.size(); ++j) {
    std::discrete_distribution<std::size_t> d(m.weights[j].begin(), m.weights[j].end());
    truth.push_back(m.values[j][d(gen)]);
  }
  const std::size_t n_obs = 1 + pick(gen, 3);
  const double coefs[] = {-1, 0.5, 1, 2};
  for (std::size_t i = 0; i < n_obs; ++i) {
    ChoiceModel::Obs o;
    o.sd = std::uniform_int_distribution<int>(4, 12)(gen) / 8.0;
    std::string pred;
    double mean = 0;
    for (std::size_t j = 0; j < m.latents.size(); ++j) {
      o.coef.push_back(coin(gen, 0.7) ? coefs[pick(gen, 4)] : 0.0);
      if (o.coef[j] == 0) continue;
      pred += (pred.empty() ? "" : "+") + num(o.coef[j]) + "*" + m.latents[j].str();
      mean += o.coef[j] * truth[j];
    }
    if (pred.empty()) {
      o.coef[0] = 1;
      pred = m.latents[0].str();
      mean = truth[0];
    }
    o.datum = std::round(std::normal_distribution<double>(mean, o.sd)(gen) * 8) / 8;
    const std::string b = "B" + std::to_string(i + 1);
    m.cells.emplace_back(b, "=" + pred);
    m.cells.emplace_back("C" + std::to_string(i + 1),
                         "=ACTUAL(" + format_number(o.datum) + ", GAUSSIAN, " + b + ", " +
                             format_number(o.sd) + ")");
    m.observations.push_back(o);
  }
  return m;
}

std::map<std::vector<double>, double> enumerate_posterior(const ChoiceModel& m) {
  std::map<std::vector<double>, double> post;
  const std::size_t k = m.latents.size();
  std::vector<std::size_t> idx(k, 0);
  double total = 0;
  for (;;) {
    std::vector<double> config(k);
    double w = 1;
    for (std::size_t j = 0; j < k; ++j) {
      config[j] = m.values[j][idx[j]];
      double wsum = 0;
      for (double x : m.weights[j]) wsum += x;
      w *= m.weights[j][idx[j]] / wsum;
    }
    for (const auto& o : m.observations) {
      double mean = 0;
      for (std::size_t j = 0; j < k; ++j) mean += o.coef[j] * config[j];
      w *= normal_pdf(o.datum, mean, o.sd);
    }
    post[config] += w;
    total += w;
    std::size_t j = 0;
    while (j < k && ++idx[j] == m.values[j].size()) idx[j++] = 0;
    if (j == k) break;
  }
  for (auto& [c, w] : post) w /= total;
  return post;
}

DagSpec random_dag(Gen& gen, std::size_t max_cells) {
  DagSpec d;
  const std::size_t n = 1 + pick(gen, max_cells);
  d.names = grid_names(gen, n, 4, 6);
  d.parents.resize(n);
  d.observed.resize(n);
  const double density = std::uniform_real_distribution<double>(0.1, 0.5)(gen);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < k; ++j) {
      if (coin(gen, density)) d.parents[k].push_back(j);
    }
    d.observed[k] = coin(gen, 0.3);
  }
  return d;
}

std::vector<std::pair<std::string, std::string>> render(const DagSpec& dag) {
  Cells cells;
  for (std::size_t k = 0; k < dag.names.size(); ++k) {
    std::string sum;
    for (std::size_t j : dag.parents[k]) sum += (sum.empty() ? "" : "+") + dag.names[j];
    if (dag.observed[k]) {
      cells.emplace_back(dag.names[k],
                         "=ACTUAL(0.5, GAUSSIAN, " + (sum.empty() ? "0" : sum) + ", 1)");
    } else if (sum.empty()) {
      cells.emplace_back(dag.names[k], k % 2 ? "=GAUSSIAN(0, 1)" : "2");
    } else {
      cells.emplace_back(dag.names[k], "=" + sum + "+GAUSSIAN(0, 1)");
    }
  }
  return cells;
}

DagSpec with_back_edge(Gen& gen, DagSpec dag) {
  const std::size_t n = dag.names.size();
  // anc[k][j]: j reaches k through parent links (or j == k).
  std::vector<std::vector<bool>> anc(n, std::vector<bool>(n, false));
  for (std::size_t k = 0; k < n; ++k) {
    anc[k][k] = true;
    for (std::size_t p : dag.parents[k]) {
      for (std::size_t j = 0; j < n; ++j) anc[k][j] = anc[k][j] || anc[p][j];
    }
  }
  const std::size_t to = pick(gen, n);
  std::vector<std::size_t> sources;
  for (std::size_t j = 0; j < n; ++j) {
    if (anc[to][j]) sources.push_back(j);
  }
  const std::size_t from = sources[pick(gen, sources.size())];
  dag.parents[from].push_back(to);
  return dag;
}

std::vector<std::pair<std::string, std::string>> random_model_cells(Gen& gen,
                                                                    std::size_t max_cells) {
  return random_cells(gen, max_cells, true);
}

std::vector<std::pair<std::string, std::string>> random_deterministic_cells(Gen& gen,
                                                                            std::size_t max_cells) {
  return random_cells(gen, max_cells, false);
}

Bookkeeping random_bookkeeping(Gen& gen) {
  Bookkeeping b;
  b.p = dyadic(gen, 64);
  b.q = dyadic(gen, 64);
  const std::size_t count = pick(gen, 4);
  for (std::size_t k = 0; k < count; ++k) {
    const Label l{CellRef(1 + static_cast<std::uint32_t>(pick(gen, 3)),
                          1 + static_cast<std::uint32_t>(pick(gen, 3))),
                  static_cast<std::uint32_t>(pick(gen, 3))};
    b.labels.push_back(l);
    if (coin(gen, 0.7)) (*b.grads)[l] = {dyadic(gen, 16), dyadic(gen, 16)};
  }
  if (coin(gen, 0.15)) b.grads.reset();
  return b;
}

}  // namespace probsheet::testing

namespace probsheet::testing {

std::map<std::vector<double>, double> joint_posterior(const PosteriorMixture& mix,
                                                      const std::vector<CellRef>& cells) {
  std::vector<std::size_t> pos;
  for (const CellRef& c : cells) pos.push_back(mix.position(c));
  std::map<std::vector<double>, double> out;
  for (std::size_t j = 0; j < mix.islands.size(); ++j) {
    const ParticleStore& store = mix.islands[j].store;
    if (mix.island_weights[j] == 0 || store.size() == 0) continue;
    double total = 0;
    for (std::size_t s = 0; s < store.size(); ++s) total += store.weight(s);
    for (std::size_t s = 0; s < store.size(); ++s) {
      std::vector<double> key;
      for (std::size_t p : pos) key.push_back(store.values[s][p]);
      out[key] += mix.island_weights[j] * store.weight(s) / total;
    }
  }
  return out;
}

double total_variation(const std::map<std::vector<double>, double>& a,
                       const std::map<std::vector<double>, double>& b) {
  double sum = 0;
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    sum += std::abs(v - (it == b.end() ? 0.0 : it->second));
  }
  for (const auto& [k, v] : b) {
    if (!a.count(k)) sum += v;
  }
  return sum / 2;
}

}  // namespace probsheet::testing
