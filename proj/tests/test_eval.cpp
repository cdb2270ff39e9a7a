#include <doctest.h>

#include <cmath>
#include <set>

#include "probsheet/errors.hpp"
#include "probsheet/eval.hpp"
#include "support/support.hpp"

using namespace probsheet;
using probsheet::testing::compile;

namespace {

CellRef ref(const char* s) { return CellRef::from_string(s); }
Label lab(const char* s, std::uint32_t i = 0) { return Label{ref(s), i}; }

Bookkeeping bk(double p, double q, std::optional<GradientMap> g, std::vector<Label> l) {
  return Bookkeeping{p, q, std::move(g), std::move(l)};
}

struct PriorRun {
  BlackOpRegistry registry = BlackOpRegistry::with_builtins();
  ProposalOracle oracle = ProposalOracle::prior();
  Rng rng{123};
  EvalContext ctx() { return EvalContext{oracle, registry, rng}; }
};

BlackOpDef noisy(const std::string& name) {
  return BlackOpDef{name, 1, false, [](std::span<const double> a, Rng& rng) {
                      return a[0] + std::normal_distribution<double>(0, 1)(rng);
                    }};
}

}  // namespace

TEST_CASE("combine examples") {
  const Label a = lab("A1");
  const Label b = lab("B1");
  CHECK(combine(bk(1, 2, GradientMap{{a, {0.5}}}, {a}), bk(3, 4, GradientMap{{b, {-1}}}, {b})) ==
        bk(4, 6, GradientMap{{a, {0.5}}, {b, {-1}}}, {a, b}));
  const Bookkeeping w = bk(1.5, -2, GradientMap{{a, {1, 2}}}, {a});
  CHECK(combine(w, Bookkeeping{}) == w);
  CHECK(combine(Bookkeeping{}, w) == w);
  Bookkeeping bot = Bookkeeping::bottom();
  bot.labels = {a};
  const Bookkeeping r = combine(bot, bk(1, 1, GradientMap{{b, {1}}}, {b}));
  CHECK(r == bk(1, 1, std::nullopt, {a, b}));
  CHECK(r.poisoned());
  CHECK(combine(bk(0, 0, GradientMap{{a, {1}}}, {}), bk(0, 0, GradientMap{{a, {2}}}, {})).grads->at(a) ==
        std::vector<double>{1});
}

TEST_CASE("combine is a monoid with an absorbing bottom") {
  testing::Gen gen(51);
  for (int i = 0; i < 2000; ++i) {
    const Bookkeeping x = testing::random_bookkeeping(gen);
    const Bookkeeping y = testing::random_bookkeeping(gen);
    const Bookkeeping z = testing::random_bookkeeping(gen);
    CHECK(combine(combine(x, y), z) == combine(x, combine(y, z)));
    CHECK(combine(x, Bookkeeping{}) == x);
    CHECK(combine(Bookkeeping{}, x) == x);
    Bookkeeping in_place = x;
    combine_into(in_place, y);
    CHECK(in_place == combine(x, y));
    CHECK(combine(x, y).poisoned() == (x.poisoned() || y.poisoned()));
  }
  for (int i = 0; i < 200; ++i) {
    Bookkeeping acc;
    bool any_bottom = false;
    const int n = 1 + static_cast<int>(gen() % 12);
    for (int k = 0; k < n; ++k) {
      const Bookkeeping next = testing::random_bookkeeping(gen);
      any_bottom = any_bottom || next.poisoned();
      combine_into(acc, next);
    }
    CHECK(acc.poisoned() == any_bottom);
  }
}

TEST_CASE("state") {
  State s;
  s.bind(ref("A1"), 2);
  CHECK(s.at(ref("A1")) == 2);
  CHECK_THROWS_AS(s.bind(ref("A1"), 3), AlreadyBoundError);
  CHECK_THROWS_AS(s.at(ref("B1")), UnboundRefError);
  const std::vector<CellRef> order{ref("A1"), ref("B1"), ref("C1")};
  CHECK(s.downward_closed(order));
  s.bind(ref("C1"), 1);
  CHECK_FALSE(s.downward_closed(order));
}

TEST_CASE("eval_expr examples") {
  PriorRun run;
  const State empty;
  Evaluation e = eval_expr(Expr{Const{3}}, empty, run.ctx());
  CHECK(e.value == 3);
  CHECK(e.bk == Bookkeeping{});

  e = eval_expr(parse_cell(ref("C3"), "=ACTUAL(0.0, GAUSSIAN, 0, 1)"), empty, run.ctx());
  CHECK(e.value == 0);
  CHECK(e.bk.p == doctest::Approx(-0.9189385332));
  CHECK(e.bk.q == 0);
  CHECK(e.bk.grads == GradientMap{});
  CHECK(e.bk.labels == std::vector<Label>{lab("C3")});

  e = eval_expr(parse_cell(ref("A1"), "=GAUSSIAN(0, 1)"), empty, run.ctx());
  CHECK(e.bk.p == e.bk.q);
  CHECK(e.bk.p == doctest::Approx(testing::normal_logpdf(e.value, 0, 1)));
  CHECK(e.bk.grads == GradientMap{});
  CHECK(e.bk.labels == std::vector<Label>{lab("A1")});

  CHECK_THROWS_AS(eval_expr(parse_cell(ref("A1"), "=B1+1"), empty, run.ctx()), UnboundRefError);
}

TEST_CASE("variational mode populates gradients") {
  BlackOpRegistry registry = BlackOpRegistry::with_builtins();
  ProposalMap map{{lab("A1"), Proposal{VariationalFamily::gaussian(), {1, 0}}}};
  ProposalOracle oracle = ProposalOracle::variational(map);
  Rng rng(7);
  EvalContext ctx{oracle, registry, rng};
  const Evaluation e = eval_expr(parse_cell(ref("A1"), "=GAUSSIAN(0, 2)"), State{}, ctx);
  CHECK(e.bk.p == doctest::Approx(testing::normal_logpdf(e.value, 0, 2)));
  CHECK(e.bk.q == doctest::Approx(testing::normal_logpdf(e.value, 1, 1)));
  REQUIRE(e.bk.grads.has_value());
  const auto& g = e.bk.grads->at(lab("A1"));
  CHECK(g[0] == doctest::Approx(e.value - 1));
  CHECK(g[1] == doctest::Approx((e.value - 1) * (e.value - 1) - 1));

  // Actual labels need no factor.
  const Evaluation a =
      eval_expr(parse_cell(ref("B1"), "=ACTUAL(1, GAUSSIAN, 0, 1)"), State{}, ctx);
  CHECK(a.bk.q == 0);
  CHECK(a.bk.grads == GradientMap{});
  CHECK_THROWS_AS(eval_expr(parse_cell(ref("C1"), "=GAUSSIAN(0, 1)"), State{}, ctx),
                  UnsupportedModelError);
}

TEST_CASE("step_cell examples") {
  PriorRun run;
  CompiledSheet c = compile({{"A1", "3.5"}});
  StepResult s = step_cell(c, State{}, ref("A1"), run.ctx());
  CHECK(s.state.at(ref("A1")) == 3.5);
  CHECK(s.bk == Bookkeeping{});
  CHECK_THROWS_AS(step_cell(c, s.state, ref("A1"), run.ctx()), AlreadyBoundError);

  c = compile({{"A1", "2"}, {"B1", "=A1^2"}});
  State rho;
  rho.bind(ref("A1"), 2);
  s = step_cell(c, rho, ref("B1"), run.ctx());
  CHECK(s.state.at(ref("B1")) == 4);
  CHECK(s.state.size() == 2);
  CHECK_THROWS_AS(step_cell(c, State{}, ref("B1"), run.ctx()), UnboundRefError);

  c = compile({{"A1", "=BETWEEN(0,2)"}});
  s = step_cell(c, State{}, ref("A1"), run.ctx());
  CHECK(s.state.at(ref("A1")) >= 0);
  CHECK(s.state.at(ref("A1")) <= 2);
  CHECK(s.bk.p == doctest::Approx(-std::log(2.0)));
  CHECK(s.bk.q == doctest::Approx(-std::log(2.0)));
}

TEST_CASE("run_sheet examples") {
  PriorRun run;
  SheetRun r = run_sheet(compile({{"A1", "1"}, {"A2", "=A1+1"}, {"A3", "=A2*A1"}}), run.ctx());
  CHECK(r.state.size() == 3);
  CHECK(r.bk == Bookkeeping{});
  CHECK(r.steps == 3);

  r = run_sheet(compile({{"A1", "=GAUSSIAN(0,1)"}, {"B1", "=ACTUAL(1.0, GAUSSIAN, A1, 1.0)"}}),
                run.ctx());
  CHECK(r.bk.labels == std::vector<Label>{lab("A1"), lab("B1")});
  CHECK(r.state.at(ref("B1")) == 1.0);
  CHECK(r.bk.p - r.bk.q == doctest::Approx(testing::normal_logpdf(1.0, r.state.at(ref("A1")), 1)));
}

TEST_CASE("errors carry label context") {
  PriorRun run;
  try {
    run_sheet(compile({{"A1", "1"}, {"B2", "=A1+GAUSSIAN(0, A1-1)"}}), run.ctx());
    FAIL("expected ParamError");
  } catch (const ParamError& e) {
    CHECK(std::string(e.what()).find("B2#1") != std::string::npos);
  }
  try {
    run_sheet(compile({{"A1", "=IRR(100, 10)"}}), run.ctx());
    FAIL("expected NoRootError");
  } catch (const NoRootError& e) {
    CHECK(std::string(e.what()).find("A1#0") != std::string::npos);
  }
}

TEST_CASE("IF short-circuits") {
  PriorRun run;
  SheetRun r = run_sheet(compile({{"A1", "1"}, {"B1", "=IF(A1, 5, GAUSSIAN(0, 1))"}}), run.ctx());
  CHECK(r.state.at(ref("B1")) == 5);
  CHECK(r.bk == Bookkeeping{});
  // The untaken branch would raise on evaluation.
  r = run_sheet(compile({{"A1", "0"}, {"B1", "=IF(A1, GAUSSIAN(0, -1), 7)"}}), run.ctx());
  CHECK(r.state.at(ref("B1")) == 7);
  r = run_sheet(compile({{"A1", "0.5"}, {"B1", "=IF(A1, GAUSSIAN(0, 1), 7)"}}), run.ctx());
  CHECK(r.bk.labels == std::vector<Label>{lab("B1", 0)});
}

TEST_CASE("black-box operators") {
  PriorRun run;
  run.registry.register_op(noisy("NOISY"));
  SheetRun r = run_sheet(compile({{"A1", "=IRR(-100, 110)"}}), run.ctx());
  CHECK(r.state.at(ref("A1")) == doctest::Approx(0.1));
  CHECK(r.bk == Bookkeeping{});

  r = run_sheet(compile({{"A1", "=GAUSSIAN(0, 1)"}, {"B1", "=NOISY(A1)"}}), run.ctx());
  CHECK(r.bk.poisoned());
  CHECK(r.bk.labels == std::vector<Label>{lab("A1"), lab("B1")});

  const CompiledSheet c = compile({{"A1", "=GAUSSIAN(0, 1)"},
                                   {"B1", "=A1*2"},
                                   {"C1", "=NOISY(3)"},
                                   {"D1", "=IRR(-100, 110)"},
                                   {"E1", "=ACTUAL(1, GAUSSIAN, B1, 1)"},
                                   {"F1", "=IF(D1, 1, 2)"}});
  CHECK(random_cells(c, run.registry) == std::set<CellRef>{ref("A1"), ref("B1"), ref("C1")});
}

TEST_CASE("generated sheets: labels, termination, prior identity") {
  testing::Gen gen(61);
  PriorRun run;
  for (int trial = 0; trial < 300; ++trial) {
    const auto cells = testing::random_model_cells(gen, 50);
    const CompiledSheet c = compile(cells);
    const Sheet& sheet = c.sheet;

    SheetRun r = run_sheet(c, run.ctx());
    CHECK(r.steps == sheet.size());
    CHECK(r.state.size() == sheet.size());
    CHECK(std::set<Label>(r.bk.labels.begin(), r.bk.labels.end()).size() == r.bk.labels.size());

    // Step by step, the state stays downward closed.
    State rho;
    Bookkeeping total;
    bool closed = true;
    for (const CellRef& cell : c.order) {
      StepResult s = step_cell(c, rho, cell, run.ctx());
      rho = std::move(s.state);
      combine_into(total, std::move(s.bk));
      closed = closed && rho.downward_closed(c.order);
    }
    CHECK(closed);

    bool has_actual = false;
    for (const auto& [name, text] : cells) has_actual = has_actual || text.find("ACTUAL") != std::string::npos;
    if (!has_actual) CHECK(r.bk.p == r.bk.q);
  }
}

TEST_CASE("deterministic sheets match the recursive oracle") {
  testing::Gen gen(71);
  PriorRun run;
  for (int trial = 0; trial < 300; ++trial) {
    const CompiledSheet c = compile(testing::random_deterministic_cells(gen, 30));
    const SheetRun r = run_sheet(c, run.ctx());
    const auto expected = testing::recursive_eval(c.sheet);
    REQUIRE(expected.size() == r.state.size());
    for (const auto& [cell, v] : expected) {
      const double got = r.state.at(cell);
      if (std::isnan(v)) {
        CHECK(std::isnan(got));
      } else {
        CHECK(std::abs(got - v) <= 1e-12 * std::max(1.0, std::abs(v)));
      }
    }
    CHECK(r.bk.labels.empty());
    CHECK(r.bk.p == 0);
  }
}

TEST_CASE("runs are reproducible from the seed") {
  testing::Gen gen(81);
  BlackOpRegistry registry = BlackOpRegistry::with_builtins();
  ProposalOracle oracle = ProposalOracle::prior();
  for (int trial = 0; trial < 50; ++trial) {
    const CompiledSheet c = compile(testing::random_model_cells(gen, 20));
    Rng a(trial);
    Rng b(trial);
    const SheetRun x = run_sheet(c, EvalContext{oracle, registry, a});
    const SheetRun y = run_sheet(c, EvalContext{oracle, registry, b});
    CHECK(x.state == y.state);
    CHECK(x.bk == y.bk);
  }
}
