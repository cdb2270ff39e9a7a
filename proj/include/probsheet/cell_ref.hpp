#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>

namespace probsheet {

// A cell address such as "B12". Columns are stored as a 1-based bijective
// base-26 index (A=1, Z=26, AA=27, ...).
class CellRef {
 public:
  CellRef() = default;
  CellRef(std::uint32_t column, std::uint32_t row);

  // Parses the canonical form: uppercase column letters followed by a row
  // number without leading zeros. Returns nullopt on anything else.
  static std::optional<CellRef> parse(std::string_view text);
  // Like parse() but throws ParamError with the offending text.
  static CellRef from_string(std::string_view text);

  std::uint32_t column() const noexcept { return column_; }
  std::uint32_t row() const noexcept { return row_; }
  std::string column_name() const;
  std::string str() const;

  // Row-major ordering; used only as a deterministic tiebreaker.
  friend auto operator<=>(const CellRef& a, const CellRef& b) noexcept {
    if (auto c = a.row_ <=> b.row_; c != 0) return c;
    return a.column_ <=> b.column_;
  }
  friend bool operator==(const CellRef&, const CellRef&) noexcept = default;

 private:
  std::uint32_t column_ = 1;
  std::uint32_t row_ = 1;
};

std::ostream& operator<<(std::ostream& os, const CellRef& ref);

// Names one random choice: the operator node at preorder position `index`
// inside the formula of `cell`.
struct Label {
  CellRef cell;
  std::uint32_t index = 0;

  std::string str() const;
  friend auto operator<=>(const Label&, const Label&) noexcept = default;
  friend bool operator==(const Label&, const Label&) noexcept = default;
};

std::ostream& operator<<(std::ostream& os, const Label& label);

}  // namespace probsheet

template <>
struct std::hash<probsheet::CellRef> {
  std::size_t operator()(const probsheet::CellRef& r) const noexcept {
    return (static_cast<std::size_t>(r.column()) << 32) ^ r.row();
  }
};

template <>
struct std::hash<probsheet::Label> {
  std::size_t operator()(const probsheet::Label& l) const noexcept {
    return std::hash<probsheet::CellRef>{}(l.cell) * 31u + l.index;
  }
};
