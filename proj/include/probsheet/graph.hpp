#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "probsheet/cell_ref.hpp"
#include "probsheet/formula.hpp"

namespace probsheet {

// A spreadsheet: a finite map from cell references to formulas.
using Sheet = std::map<CellRef, Expr>;

// Dependency graph with an edge (r, r') whenever r occurs in the formula of
// r'. Vertices are stored in CellRef order; edges are adjacency lists over
// vertex indices.
struct DepGraph {
  std::vector<CellRef> vertices;
  std::vector<std::vector<std::size_t>> successors;
  std::vector<std::vector<std::size_t>> predecessors;

  std::size_t size() const { return vertices.size(); }
  std::size_t index_of(const CellRef& r) const;
  std::set<std::pair<CellRef, CellRef>> edges() const;
};

// Throws DanglingRefError when a formula mentions a cell absent from the sheet.
DepGraph build_graph(const Sheet& sheet);

// Returns a witness cycle [r1, ..., rk, r1] or nullopt when the graph is a DAG.
std::optional<std::vector<CellRef>> find_cycle(const DepGraph& g);

// Throws CycleError carrying the witness when the graph has a cycle.
void check_wellformed(const DepGraph& g);

// Kahn's algorithm; among ready vertices the smallest CellRef goes first.
// Precondition: g is acyclic.
std::vector<CellRef> topo_order(const DepGraph& g);

// A well-formed sheet prepared for inference. The cell sets below are all
// sorted by evaluation order.
struct CompiledSheet {
  Sheet sheet;
  DepGraph graph;
  std::vector<CellRef> order;
  std::vector<CellRef> observed;                     // cells whose formula is ACTUAL
  std::vector<std::vector<CellRef>> pred_blocks;     // ancestors first needed by observed[i]
  std::vector<std::vector<CellRef>> frontier_blocks; // values restored before block i
  std::vector<CellRef> residual;                     // cells that affect no observation
  std::vector<CellRef> residual_frontier;
  std::vector<Label> erp_labels;                     // labels of every ERP and ACTUAL node

  // Position of r in `order`.
  std::size_t position(const CellRef& r) const;
  const Expr& formula(const CellRef& r) const { return sheet.at(r); }
  bool is_observed(const CellRef& r) const;

 private:
  friend CompiledSheet decompose(const DepGraph&, const std::vector<CellRef>&, const Sheet&);
  std::map<CellRef, std::size_t> position_;
};

CompiledSheet decompose(const DepGraph& g, const std::vector<CellRef>& order,
                        const Sheet& sheet);

// build_graph + check_wellformed + topo_order + decompose.
CompiledSheet compile_sheet(const Sheet& sheet);

}  // namespace probsheet
