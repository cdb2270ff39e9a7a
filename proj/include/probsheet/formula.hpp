#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "probsheet/cell_ref.hpp"

namespace probsheet {

// ---------------------------------------------------------------------------
// Tokens
// ---------------------------------------------------------------------------

enum class TokenKind {
  Number,
  Ident,
  Cell,
  LParen,
  RParen,
  Comma,
  Equals,
  Plus,
  Minus,
  Star,
  Slash,
  Caret,
  Less,
  LessEq,
  Greater,
  GreaterEq,
  End,
};

struct Token {
  TokenKind kind = TokenKind::End;
  std::string text;    // identifier / cell name / operator spelling
  double number = 0;   // valid for TokenKind::Number
  std::size_t offset = 0;

  friend bool operator==(const Token&, const Token&) = default;
};

std::string_view token_kind_name(TokenKind kind);

// Splits formula text into tokens, skipping whitespace. Numbers are unsigned;
// a leading minus is always a separate operator token. The final token is
// always End. Throws LexError with the byte offset of the first bad character.
std::vector<Token> tokenize(std::string_view text);

// ---------------------------------------------------------------------------
// Syntax tree
// ---------------------------------------------------------------------------

enum class ErpKind { Gaussian, Between, Choice, Near };

enum class PrimOp {
  Add,
  Sub,
  Mul,
  Div,
  Pow,
  Neg,
  Log,
  Exp,
  Sqrt,
  Abs,
  Min,
  Max,
  Less,
  LessEq,
  Greater,
  GreaterEq,
  Equal,
};

std::string_view erp_name(ErpKind kind);
std::optional<ErpKind> erp_from_name(std::string_view name);
// Checks the argument count of an ERP application; throws ArityError.
void check_erp_arity(ErpKind kind, std::size_t count);

std::string_view prim_name(PrimOp op);
// Evaluates a primitive on already-evaluated arguments. Comparisons return
// 1.0 or 0.0.
double apply_prim(PrimOp op, const std::vector<double>& args);

// True for every name the formula language claims for itself (ERPs, IF,
// ACTUAL and the named primitives). Black-box operators may not use them.
bool is_reserved_name(std::string_view name);

struct Expr;

struct Const {
  double value = 0;
  friend bool operator==(const Const&, const Const&) = default;
};

struct Ref {
  CellRef ref;
  friend bool operator==(const Ref&, const Ref&) = default;
};

struct PrimApp {
  PrimOp op;
  Label label;
  std::vector<Expr> args;
  friend bool operator==(const PrimApp&, const PrimApp&) = default;
};

struct BlackApp {
  std::string name;
  Label label;
  std::vector<Expr> args;
  friend bool operator==(const BlackApp&, const BlackApp&) = default;
};

struct ErpApp {
  ErpKind kind;
  Label label;
  std::vector<Expr> args;
  friend bool operator==(const ErpApp&, const ErpApp&) = default;
};

// args holds exactly {condition, then-branch, else-branch}.
struct If {
  std::vector<Expr> args;
  const Expr& condition() const { return args[0]; }
  const Expr& then_branch() const { return args[1]; }
  const Expr& else_branch() const { return args[2]; }
  friend bool operator==(const If&, const If&) = default;
};

// An observation: a draw from `erp(args...)` was observed to equal `datum`.
struct Actual {
  double datum = 0;
  ErpKind erp;
  Label label;
  std::vector<Expr> args;
  friend bool operator==(const Actual&, const Actual&) = default;
};

struct Expr {
  using Node = std::variant<Const, Ref, PrimApp, BlackApp, ErpApp, If, Actual>;
  Node node;

  template <typename T>
  bool is() const {
    return std::holds_alternative<T>(node);
  }
  template <typename T>
  const T& as() const {
    return std::get<T>(node);
  }
  friend bool operator==(const Expr&, const Expr&) = default;
};

// Parses the content string of `cell`. Bare numeric text (optionally signed)
// becomes a Const; text starting with '=' is a formula. Operator nodes are
// labelled (cell, i) in preorder starting at 0. ACTUAL is only accepted as the
// whole formula.
Expr parse_cell(const CellRef& cell, std::string_view text);

// Every CellRef occurring anywhere in `e`, duplicates collapsed.
std::set<CellRef> references_of(const Expr& e);

// Labels of all operator nodes in preorder.
std::vector<Label> labels_of(const Expr& e);

// Renders an expression in the concrete formula syntax (fully parenthesised
// infix). to_cell_text() additionally emits the leading '=' for formulas, so
// parse_cell(cell, to_cell_text(e)) == e for every parsed e.
std::string to_formula(const Expr& e);
std::string to_cell_text(const Expr& e);

// Shortest decimal text that round-trips the double exactly.
std::string format_number(double value);

}  // namespace probsheet
