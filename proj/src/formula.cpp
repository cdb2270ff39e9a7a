#include "probsheet/formula.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "probsheet/errors.hpp"

namespace probsheet {

// ---------------------------------------------------------------------------
// Names
// ---------------------------------------------------------------------------

namespace {

struct NamedPrim {
  std::string_view name;
  PrimOp op;
  std::size_t min_args;
  std::size_t max_args;  // 0 = unbounded
};

constexpr std::array kNamedPrims = {
    NamedPrim{"LOG", PrimOp::Log, 1, 1},   NamedPrim{"EXP", PrimOp::Exp, 1, 1},
    NamedPrim{"SQRT", PrimOp::Sqrt, 1, 1}, NamedPrim{"ABS", PrimOp::Abs, 1, 1},
    NamedPrim{"MIN", PrimOp::Min, 1, 0},   NamedPrim{"MAX", PrimOp::Max, 1, 0},
};

const NamedPrim* find_named_prim(std::string_view name) {
  for (const auto& p : kNamedPrims) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

}  // namespace

std::string_view token_kind_name(TokenKind kind) {
  switch (kind) {
    case TokenKind::Number: return "number";
    case TokenKind::Ident: return "identifier";
    case TokenKind::Cell: return "cell reference";
    case TokenKind::LParen: return "'('";
    case TokenKind::RParen: return "')'";
    case TokenKind::Comma: return "','";
    case TokenKind::Equals: return "'='";
    case TokenKind::Plus: return "'+'";
    case TokenKind::Minus: return "'-'";
    case TokenKind::Star: return "'*'";
    case TokenKind::Slash: return "'/'";
    case TokenKind::Caret: return "'^'";
    case TokenKind::Less: return "'<'";
    case TokenKind::LessEq: return "'<='";
    case TokenKind::Greater: return "'>'";
    case TokenKind::GreaterEq: return "'>='";
    case TokenKind::End: return "end of formula";
  }
  return "?";
}

std::string_view erp_name(ErpKind kind) {
  switch (kind) {
    case ErpKind::Gaussian: return "GAUSSIAN";
    case ErpKind::Between: return "BETWEEN";
    case ErpKind::Choice: return "CHOICE";
    case ErpKind::Near: return "NEAR";
  }
  return "?";
}

std::optional<ErpKind> erp_from_name(std::string_view name) {
  for (ErpKind k : {ErpKind::Gaussian, ErpKind::Between, ErpKind::Choice, ErpKind::Near}) {
    if (erp_name(k) == name) return k;
  }
  return std::nullopt;
}

void check_erp_arity(ErpKind kind, std::size_t count) {
  const std::string name(erp_name(kind));
  switch (kind) {
    case ErpKind::Gaussian:
    case ErpKind::Between:
      if (count != 2) {
        throw ArityError(name + " takes 2 arguments, got " + std::to_string(count));
      }
      return;
    case ErpKind::Choice:
      if (count < 2 || count % 2 != 0) {
        throw ArityError("CHOICE takes value/weight pairs, got " + std::to_string(count) +
                         " arguments");
      }
      return;
    case ErpKind::Near:
      if (count != 1) {
        throw ArityError("NEAR takes 1 argument, got " + std::to_string(count));
      }
      return;
  }
}

std::string_view prim_name(PrimOp op) {
  switch (op) {
    case PrimOp::Add: return "+";
    case PrimOp::Sub: return "-";
    case PrimOp::Mul: return "*";
    case PrimOp::Div: return "/";
    case PrimOp::Pow: return "^";
    case PrimOp::Neg: return "-";
    case PrimOp::Log: return "LOG";
    case PrimOp::Exp: return "EXP";
    case PrimOp::Sqrt: return "SQRT";
    case PrimOp::Abs: return "ABS";
    case PrimOp::Min: return "MIN";
    case PrimOp::Max: return "MAX";
    case PrimOp::Less: return "<";
    case PrimOp::LessEq: return "<=";
    case PrimOp::Greater: return ">";
    case PrimOp::GreaterEq: return ">=";
    case PrimOp::Equal: return "=";
  }
  return "?";
}

double apply_prim(PrimOp op, const std::vector<double>& a) {
  switch (op) {
    case PrimOp::Add: return a[0] + a[1];
    case PrimOp::Sub: return a[0] - a[1];
    case PrimOp::Mul: return a[0] * a[1];
    case PrimOp::Div: return a[0] / a[1];
    case PrimOp::Pow: return std::pow(a[0], a[1]);
    case PrimOp::Neg: return -a[0];
    case PrimOp::Log: return std::log(a[0]);
    case PrimOp::Exp: return std::exp(a[0]);
    case PrimOp::Sqrt: return std::sqrt(a[0]);
    case PrimOp::Abs: return std::abs(a[0]);
    case PrimOp::Min: return *std::min_element(a.begin(), a.end());
    case PrimOp::Max: return *std::max_element(a.begin(), a.end());
    case PrimOp::Less: return a[0] < a[1] ? 1.0 : 0.0;
    case PrimOp::LessEq: return a[0] <= a[1] ? 1.0 : 0.0;
    case PrimOp::Greater: return a[0] > a[1] ? 1.0 : 0.0;
    case PrimOp::GreaterEq: return a[0] >= a[1] ? 1.0 : 0.0;
    case PrimOp::Equal: return a[0] == a[1] ? 1.0 : 0.0;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

bool is_reserved_name(std::string_view name) {
  return erp_from_name(name).has_value() || find_named_prim(name) != nullptr ||
         name == "IF" || name == "ACTUAL";
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

namespace {

bool is_word_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}
bool is_digit(char c) { return c >= '0' && c <= '9'; }

}  // namespace

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  auto push = [&](TokenKind kind, std::size_t start, std::size_t len) {
    out.push_back(Token{kind, std::string(text.substr(start, len)), 0, start});
    i = start + len;
  };
  while (i < n) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (is_digit(c) || (c == '.' && i + 1 < n && is_digit(text[i + 1]))) {
      const std::size_t start = i;
      while (i < n && is_digit(text[i])) ++i;
      if (i < n && text[i] == '.') {
        ++i;
        while (i < n && is_digit(text[i])) ++i;
      }
      if (i < n && (text[i] == 'e' || text[i] == 'E')) {
        std::size_t j = i + 1;
        if (j < n && (text[j] == '+' || text[j] == '-')) ++j;
        if (j < n && is_digit(text[j])) {
          i = j;
          while (i < n && is_digit(text[i])) ++i;
        }
      }
      Token tok{TokenKind::Number, std::string(text.substr(start, i - start)), 0, start};
      const auto res = std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(),
                                       tok.number);
      if (res.ec != std::errc()) {
        throw LexError(start, "malformed number '" + tok.text + "' at offset " +
                                  std::to_string(start));
      }
      out.push_back(std::move(tok));
      continue;
    }
    if (is_word_start(c)) {
      const std::size_t start = i;
      while (i < n && is_word_char(text[i])) ++i;
      std::string word(text.substr(start, i - start));
      std::transform(word.begin(), word.end(), word.begin(),
                     [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
      std::size_t j = i;
      while (j < n && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
      const bool call = j < n && text[j] == '(';
      const TokenKind kind =
          (!call && CellRef::parse(word)) ? TokenKind::Cell : TokenKind::Ident;
      out.push_back(Token{kind, std::move(word), 0, start});
      continue;
    }
    switch (c) {
      case '(': push(TokenKind::LParen, i, 1); continue;
      case ')': push(TokenKind::RParen, i, 1); continue;
      case ',': push(TokenKind::Comma, i, 1); continue;
      case '=': push(TokenKind::Equals, i, 1); continue;
      case '+': push(TokenKind::Plus, i, 1); continue;
      case '-': push(TokenKind::Minus, i, 1); continue;
      case '*': push(TokenKind::Star, i, 1); continue;
      case '/': push(TokenKind::Slash, i, 1); continue;
      case '^': push(TokenKind::Caret, i, 1); continue;
      case '<':
        if (i + 1 < n && text[i + 1] == '=') push(TokenKind::LessEq, i, 2);
        else push(TokenKind::Less, i, 1);
        continue;
      case '>':
        if (i + 1 < n && text[i + 1] == '=') push(TokenKind::GreaterEq, i, 2);
        else push(TokenKind::Greater, i, 1);
        continue;
      default:
        throw LexError(i, std::string("unexpected character '") + c + "' at offset " +
                              std::to_string(i));
    }
  }
  out.push_back(Token{TokenKind::End, "", 0, n});
  return out;
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

namespace {

class Parser {
 public:
  Parser(const CellRef& cell, std::vector<Token> tokens)
      : cell_(cell), tokens_(std::move(tokens)) {}

  Expr parse_formula() {
    expect(TokenKind::Equals);
    Expr e;
    if (peek().kind == TokenKind::Ident && peek().text == "ACTUAL") {
      e = parse_actual();
      if (peek().kind != TokenKind::End) {
        fail({std::string(token_kind_name(TokenKind::End))},
             "ACTUAL must be the entire formula");
      }
    } else {
      e = parse_comparison();
    }
    expect(TokenKind::End);
    return e;
  }

 private:
  const Token& peek() const { return tokens_[pos_]; }
  const Token& advance() { return tokens_[pos_++]; }
  bool accept(TokenKind k) {
    if (peek().kind != k) return false;
    ++pos_;
    return true;
  }

  [[noreturn]] void fail(std::vector<std::string> expected, const std::string& detail) const {
    std::ostringstream msg;
    msg << "offset " << peek().offset << ": " << detail;
    if (!expected.empty()) {
      msg << " (expected ";
      for (std::size_t i = 0; i < expected.size(); ++i) {
        msg << (i ? " or " : "") << expected[i];
      }
      msg << ")";
    }
    throw ParseError(peek().offset, std::move(expected), msg.str());
  }

  const Token& expect(TokenKind k) {
    if (peek().kind != k) {
      const std::string got = peek().kind == TokenKind::End
                                  ? std::string("end of formula")
                                  : "'" + peek().text + "'";
      fail({std::string(token_kind_name(k))}, "unexpected " + got);
    }
    return advance();
  }

  Label pending() const { return Label{cell_, 0}; }

  PrimApp prim(PrimOp op, std::vector<Expr> args) const {
    return PrimApp{op, pending(), std::move(args)};
  }

  Expr parse_comparison() {
    Expr lhs = parse_additive();
    for (;;) {
      PrimOp op;
      switch (peek().kind) {
        case TokenKind::Less: op = PrimOp::Less; break;
        case TokenKind::LessEq: op = PrimOp::LessEq; break;
        case TokenKind::Greater: op = PrimOp::Greater; break;
        case TokenKind::GreaterEq: op = PrimOp::GreaterEq; break;
        case TokenKind::Equals: op = PrimOp::Equal; break;
        default: return lhs;
      }
      advance();
      Expr rhs = parse_additive();
      lhs = Expr{prim(op, {std::move(lhs), std::move(rhs)})};
    }
  }

  Expr parse_additive() {
    Expr lhs = parse_term();
    for (;;) {
      PrimOp op;
      if (peek().kind == TokenKind::Plus) op = PrimOp::Add;
      else if (peek().kind == TokenKind::Minus) op = PrimOp::Sub;
      else return lhs;
      advance();
      Expr rhs = parse_term();
      lhs = Expr{prim(op, {std::move(lhs), std::move(rhs)})};
    }
  }

  Expr parse_term() {
    Expr lhs = parse_unary();
    for (;;) {
      PrimOp op;
      if (peek().kind == TokenKind::Star) op = PrimOp::Mul;
      else if (peek().kind == TokenKind::Slash) op = PrimOp::Div;
      else return lhs;
      advance();
      Expr rhs = parse_unary();
      lhs = Expr{prim(op, {std::move(lhs), std::move(rhs)})};
    }
  }

  Expr parse_unary() {
    if (accept(TokenKind::Minus)) {
      Expr operand = parse_unary();
      return Expr{prim(PrimOp::Neg, {std::move(operand)})};
    }
    if (accept(TokenKind::Plus)) return parse_unary();
    return parse_power();
  }

  // '^' binds tighter than unary minus and associates to the right.
  Expr parse_power() {
    Expr base = parse_primary();
    if (accept(TokenKind::Caret)) {
      Expr exponent = parse_unary();
      return Expr{prim(PrimOp::Pow, {std::move(base), std::move(exponent)})};
    }
    return base;
  }

  Expr parse_primary() {
    const Token& tok = peek();
    switch (tok.kind) {
      case TokenKind::Number: {
        const double v = advance().number;
        return Expr{Const{v}};
      }
      case TokenKind::Cell: {
        const CellRef ref = CellRef::from_string(advance().text);
        return Expr{Ref{ref}};
      }
      case TokenKind::LParen: {
        advance();
        Expr inner = parse_comparison();
        expect(TokenKind::RParen);
        return inner;
      }
      case TokenKind::Ident:
        return parse_call();
      default:
        fail({"number", "cell reference", "function call", "'('"},
             tok.kind == TokenKind::End ? "unexpected end of formula"
                                        : "unexpected '" + tok.text + "'");
    }
  }

  std::vector<Expr> parse_args() {
    expect(TokenKind::LParen);
    std::vector<Expr> args;
    if (accept(TokenKind::RParen)) return args;
    for (;;) {
      args.push_back(parse_comparison());
      if (accept(TokenKind::Comma)) continue;
      if (peek().kind == TokenKind::RParen) {
        advance();
        return args;
      }
      fail({"','", "')'"}, "malformed argument list");
    }
  }

  Expr parse_call() {
    const std::string name = peek().text;
    if (name == "ACTUAL") {
      fail({}, "ACTUAL must be the entire formula, not a subexpression");
    }
    advance();
    if (peek().kind != TokenKind::LParen) {
      fail({"'('"}, "'" + name + "' is not a cell reference");
    }
    std::vector<Expr> args = parse_args();
    if (name == "IF") {
      if (args.size() != 3) {
        throw ArityError("IF takes 3 arguments, got " + std::to_string(args.size()));
      }
      return Expr{If{std::move(args)}};
    }
    if (auto erp = erp_from_name(name)) {
      check_erp_arity(*erp, args.size());
      return Expr{ErpApp{*erp, pending(), std::move(args)}};
    }
    if (const NamedPrim* p = find_named_prim(name)) {
      if (args.size() < p->min_args || (p->max_args && args.size() > p->max_args)) {
        throw ArityError(name + " called with " + std::to_string(args.size()) +
                         " arguments");
      }
      return Expr{prim(p->op, std::move(args))};
    }
    return Expr{BlackApp{name, pending(), std::move(args)}};
  }

  Expr parse_actual() {
    expect(TokenKind::Ident);
    expect(TokenKind::LParen);
    double sign = 1.0;
    if (accept(TokenKind::Minus)) sign = -1.0;
    else accept(TokenKind::Plus);
    if (peek().kind != TokenKind::Number) {
      throw ActualDatumError("ACTUAL's first argument must be a numeric literal (offset " +
                             std::to_string(peek().offset) + ")");
    }
    const double datum = sign * advance().number;
    if (peek().kind != TokenKind::Comma) {
      throw ActualDatumError("ACTUAL's first argument must be a numeric literal (offset " +
                             std::to_string(peek().offset) + ")");
    }
    advance();
    if (peek().kind != TokenKind::Ident || !erp_from_name(peek().text)) {
      fail({"GAUSSIAN", "BETWEEN", "CHOICE", "NEAR"},
           "ACTUAL's second argument must name a random procedure");
    }
    const ErpKind erp = *erp_from_name(advance().text);
    std::vector<Expr> args;
    while (accept(TokenKind::Comma)) args.push_back(parse_comparison());
    expect(TokenKind::RParen);
    check_erp_arity(erp, args.size());
    return Expr{Actual{datum, erp, pending(), std::move(args)}};
  }

  CellRef cell_;
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

void assign_labels(Expr& e, const CellRef& cell, std::uint32_t& next) {
  std::visit(
      [&](auto& node) {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, Const> || std::is_same_v<T, Ref>) {
          // leaves carry no label
        } else if constexpr (std::is_same_v<T, If>) {
          for (auto& a : node.args) assign_labels(a, cell, next);
        } else {
          node.label = Label{cell, next++};
          for (auto& a : node.args) assign_labels(a, cell, next);
        }
      },
      e.node);
}

}  // namespace

Expr parse_cell(const CellRef& cell, std::string_view text) {
  std::size_t first = 0;
  while (first < text.size() && std::isspace(static_cast<unsigned char>(text[first]))) {
    ++first;
  }
  if (first < text.size() && text[first] == '=') {
    Parser parser(cell, tokenize(text));
    Expr e = parser.parse_formula();
    std::uint32_t next = 0;
    assign_labels(e, cell, next);
    return e;
  }
  // Constant cell: an optionally signed number and nothing else.
  const std::vector<Token> toks = tokenize(text);
  std::size_t i = 0;
  double sign = 1.0;
  if (toks[i].kind == TokenKind::Minus) {
    sign = -1.0;
    ++i;
  } else if (toks[i].kind == TokenKind::Plus) {
    ++i;
  }
  if (toks[i].kind != TokenKind::Number || toks[i + 1].kind != TokenKind::End) {
    throw ParseError(toks[i].offset, {"number", "'='"},
                     "cell content must be a number or a formula starting with '='");
  }
  return Expr{Const{sign * toks[i].number}};
}

// ---------------------------------------------------------------------------
// Queries and printing
// ---------------------------------------------------------------------------

namespace {

template <typename F>
void walk(const Expr& e, F&& f) {
  f(e);
  std::visit(
      [&](const auto& node) {
        using T = std::decay_t<decltype(node)>;
        if constexpr (!std::is_same_v<T, Const> && !std::is_same_v<T, Ref>) {
          for (const auto& a : node.args) walk(a, f);
        }
      },
      e.node);
}

void print_args(std::ostringstream& os, const std::vector<Expr>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (i) os << ", ";
    os << to_formula(args[i]);
  }
}

}  // namespace

std::set<CellRef> references_of(const Expr& e) {
  std::set<CellRef> refs;
  walk(e, [&](const Expr& sub) {
    if (sub.is<Ref>()) refs.insert(sub.as<Ref>().ref);
  });
  return refs;
}

std::vector<Label> labels_of(const Expr& e) {
  std::vector<Label> labels;
  walk(e, [&](const Expr& sub) {
    std::visit(
        [&](const auto& node) {
          using T = std::decay_t<decltype(node)>;
          if constexpr (!std::is_same_v<T, Const> && !std::is_same_v<T, Ref> &&
                        !std::is_same_v<T, If>) {
            labels.push_back(node.label);
          }
        },
        sub.node);
  });
  return labels;
}

std::string format_number(double value) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), res.ptr);
}

std::string to_formula(const Expr& e) {
  std::ostringstream os;
  std::visit(
      [&](const auto& node) {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, Const>) {
          if (node.value < 0 || std::signbit(node.value)) {
            os << "(-" << format_number(-node.value) << ")";
          } else {
            os << format_number(node.value);
          }
        } else if constexpr (std::is_same_v<T, Ref>) {
          os << node.ref.str();
        } else if constexpr (std::is_same_v<T, PrimApp>) {
          switch (node.op) {
            case PrimOp::Neg:
              os << "(-" << to_formula(node.args[0]) << ")";
              break;
            case PrimOp::Log:
            case PrimOp::Exp:
            case PrimOp::Sqrt:
            case PrimOp::Abs:
            case PrimOp::Min:
            case PrimOp::Max:
              os << prim_name(node.op) << "(";
              print_args(os, node.args);
              os << ")";
              break;
            default:
              os << "(" << to_formula(node.args[0]) << " " << prim_name(node.op) << " "
                 << to_formula(node.args[1]) << ")";
          }
        } else if constexpr (std::is_same_v<T, BlackApp>) {
          os << node.name << "(";
          print_args(os, node.args);
          os << ")";
        } else if constexpr (std::is_same_v<T, ErpApp>) {
          os << erp_name(node.kind) << "(";
          print_args(os, node.args);
          os << ")";
        } else if constexpr (std::is_same_v<T, If>) {
          os << "IF(";
          print_args(os, node.args);
          os << ")";
        } else if constexpr (std::is_same_v<T, Actual>) {
          os << "ACTUAL(" << format_number(node.datum) << ", " << erp_name(node.erp);
          for (const auto& a : node.args) os << ", " << to_formula(a);
          os << ")";
        }
      },
      e.node);
  return os.str();
}

std::string to_cell_text(const Expr& e) {
  if (e.is<Const>()) return format_number(e.as<Const>().value);
  return "=" + to_formula(e);
}

}  // namespace probsheet
