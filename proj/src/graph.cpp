#include "probsheet/graph.hpp"

#include <algorithm>
#include <cassert>

#include "probsheet/errors.hpp"

namespace probsheet {

namespace {

void collect_random_labels(const Expr& e, std::vector<Label>& out) {
  std::visit(
      [&](const auto& node) {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, ErpApp> || std::is_same_v<T, Actual>) {
          out.push_back(node.label);
        }
        if constexpr (!std::is_same_v<T, Const> && !std::is_same_v<T, Ref>) {
          for (const auto& a : node.args) collect_random_labels(a, out);
        }
      },
      e.node);
}

}  // namespace

std::size_t DepGraph::index_of(const CellRef& r) const {
  auto it = std::lower_bound(vertices.begin(), vertices.end(), r);
  if (it == vertices.end() || *it != r) {
    throw UnboundRefError("cell " + r.str() + " is not in the graph");
  }
  return static_cast<std::size_t>(it - vertices.begin());
}

std::set<std::pair<CellRef, CellRef>> DepGraph::edges() const {
  std::set<std::pair<CellRef, CellRef>> out;
  for (std::size_t u = 0; u < size(); ++u) {
    for (std::size_t v : successors[u]) out.emplace(vertices[u], vertices[v]);
  }
  return out;
}

DepGraph build_graph(const Sheet& sheet) {
  DepGraph g;
  g.vertices.reserve(sheet.size());
  for (const auto& [ref, expr] : sheet) g.vertices.push_back(ref);
  g.successors.resize(g.size());
  g.predecessors.resize(g.size());
  std::size_t v = 0;
  for (const auto& [ref, expr] : sheet) {
    for (const CellRef& used : references_of(expr)) {
      if (!sheet.count(used)) {
        throw DanglingRefError("cell " + ref.str() + " references " + used.str() +
                               ", which does not exist");
      }
      const std::size_t u = g.index_of(used);
      g.successors[u].push_back(v);
      g.predecessors[v].push_back(u);
    }
    ++v;
  }
  for (auto& s : g.successors) std::sort(s.begin(), s.end());
  return g;
}

std::optional<std::vector<CellRef>> find_cycle(const DepGraph& g) {
  enum class Color { White, Grey, Black };
  std::vector<Color> color(g.size(), Color::White);
  std::vector<std::size_t> path;

  // Iterative DFS so deep chains cannot overflow the stack.
  for (std::size_t root = 0; root < g.size(); ++root) {
    if (color[root] != Color::White) continue;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
    color[root] = Color::Grey;
    path.assign(1, root);
    while (!stack.empty()) {
      auto& [u, next] = stack.back();
      if (next < g.successors[u].size()) {
        const std::size_t v = g.successors[u][next++];
        if (color[v] == Color::Grey) {
          auto start = std::find(path.begin(), path.end(), v);
          std::vector<CellRef> cycle;
          for (auto it = start; it != path.end(); ++it) cycle.push_back(g.vertices[*it]);
          cycle.push_back(g.vertices[v]);
          return cycle;
        }
        if (color[v] == Color::White) {
          color[v] = Color::Grey;
          path.push_back(v);
          stack.emplace_back(v, 0);
        }
      } else {
        color[u] = Color::Black;
        path.pop_back();
        stack.pop_back();
      }
    }
  }
  return std::nullopt;
}

void check_wellformed(const DepGraph& g) {
  if (auto cycle = find_cycle(g)) {
    std::vector<std::string> names;
    std::string rendered;
    for (const auto& r : *cycle) {
      if (!rendered.empty()) rendered += " → ";
      rendered += r.str();
      names.push_back(r.str());
    }
    throw CycleError(std::move(names), "circular reference: " + rendered);
  }
}

std::vector<CellRef> topo_order(const DepGraph& g) {
  std::vector<std::size_t> indegree(g.size());
  for (std::size_t v = 0; v < g.size(); ++v) indegree[v] = g.predecessors[v].size();
  std::set<std::size_t> ready;
  for (std::size_t v = 0; v < g.size(); ++v) {
    if (indegree[v] == 0) ready.insert(v);
  }
  std::vector<CellRef> order;
  order.reserve(g.size());
  while (!ready.empty()) {
    const std::size_t u = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(g.vertices[u]);
    for (std::size_t v : g.successors[u]) {
      if (--indegree[v] == 0) ready.insert(v);
    }
  }
  assert(order.size() == g.size() && "topo_order requires an acyclic graph");
  return order;
}

std::size_t CompiledSheet::position(const CellRef& r) const {
  auto it = position_.find(r);
  if (it == position_.end()) {
    throw UnboundRefError("cell " + r.str() + " is not part of the sheet");
  }
  return it->second;
}

bool CompiledSheet::is_observed(const CellRef& r) const {
  auto it = sheet.find(r);
  return it != sheet.end() && it->second.is<Actual>();
}

CompiledSheet decompose(const DepGraph& g, const std::vector<CellRef>& order,
                        const Sheet& sheet) {
  CompiledSheet out;
  out.sheet = sheet;
  out.graph = g;
  out.order = order;
  for (std::size_t i = 0; i < order.size(); ++i) out.position_[order[i]] = i;

  const std::size_t n = g.size();
  // Order positions indexed by vertex index, for sorting sets by evaluation order.
  std::vector<std::size_t> rank(n);
  for (std::size_t v = 0; v < n; ++v) rank[v] = out.position_.at(g.vertices[v]);
  auto sorted_cells = [&](const std::vector<bool>& member) {
    std::vector<std::size_t> idx;
    for (std::size_t v = 0; v < n; ++v) {
      if (member[v]) idx.push_back(v);
    }
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return rank[a] < rank[b]; });
    std::vector<CellRef> cells;
    cells.reserve(idx.size());
    for (std::size_t v : idx) cells.push_back(g.vertices[v]);
    return cells;
  };

  std::vector<std::size_t> observed;
  for (const CellRef& r : order) {
    if (sheet.at(r).is<Actual>()) observed.push_back(g.index_of(r));
  }

  // Cells already evaluated by earlier rounds (earlier blocks and earlier
  // observed vertices) are excluded from later ancestor sets.
  std::vector<bool> assigned(n, false);
  for (std::size_t target : observed) {
    std::vector<bool> block(n, false);
    std::vector<std::size_t> stack(g.predecessors[target].begin(),
                                   g.predecessors[target].end());
    std::vector<bool> seen(n, false);
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      if (seen[u]) continue;
      seen[u] = true;
      if (!assigned[u]) block[u] = true;
      for (std::size_t p : g.predecessors[u]) stack.push_back(p);
    }

    std::vector<bool> closed = block;
    closed[target] = true;
    std::vector<bool> frontier(n, false);
    for (std::size_t v = 0; v < n; ++v) {
      if (!closed[v]) continue;
      for (std::size_t p : g.predecessors[v]) {
        if (!closed[p]) frontier[p] = true;
      }
    }

    out.observed.push_back(g.vertices[target]);
    out.pred_blocks.push_back(sorted_cells(block));
    out.frontier_blocks.push_back(sorted_cells(frontier));
    for (std::size_t v = 0; v < n; ++v) {
      if (closed[v]) assigned[v] = true;
    }
  }

  std::vector<bool> residual(n, false);
  for (std::size_t v = 0; v < n; ++v) residual[v] = !assigned[v];
  std::vector<bool> residual_frontier(n, false);
  for (std::size_t v = 0; v < n; ++v) {
    if (!residual[v]) continue;
    for (std::size_t p : g.predecessors[v]) {
      if (!residual[p]) residual_frontier[p] = true;
    }
  }
  out.residual = sorted_cells(residual);
  out.residual_frontier = sorted_cells(residual_frontier);

  for (const CellRef& r : order) collect_random_labels(sheet.at(r), out.erp_labels);
  return out;
}

CompiledSheet compile_sheet(const Sheet& sheet) {
  DepGraph g = build_graph(sheet);
  check_wellformed(g);
  std::vector<CellRef> order = topo_order(g);
  return decompose(g, order, sheet);
}

}  // namespace probsheet
