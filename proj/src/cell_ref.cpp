#include "probsheet/cell_ref.hpp"

#include <algorithm>
#include <charconv>

#include "probsheet/errors.hpp"

namespace probsheet {

namespace {

constexpr std::size_t kMaxColumnLetters = 6;
constexpr std::size_t kMaxRowDigits = 9;

}  // namespace

CellRef::CellRef(std::uint32_t column, std::uint32_t row)
    : column_(column), row_(row) {
  if (column == 0 || row == 0) {
    throw ParamError("cell column and row must be positive");
  }
}

std::optional<CellRef> CellRef::parse(std::string_view text) {
  std::size_t i = 0;
  std::uint32_t column = 0;
  while (i < text.size() && text[i] >= 'A' && text[i] <= 'Z') {
    column = column * 26 + static_cast<std::uint32_t>(text[i] - 'A' + 1);
    ++i;
  }
  if (i == 0 || i > kMaxColumnLetters) return std::nullopt;
  const std::string_view digits = text.substr(i);
  if (digits.empty() || digits.size() > kMaxRowDigits || digits.front() == '0') {
    return std::nullopt;
  }
  if (!std::all_of(digits.begin(), digits.end(),
                   [](char c) { return c >= '0' && c <= '9'; })) {
    return std::nullopt;
  }
  std::uint32_t row = 0;
  std::from_chars(digits.data(), digits.data() + digits.size(), row);
  return CellRef(column, row);
}

CellRef CellRef::from_string(std::string_view text) {
  auto ref = parse(text);
  if (!ref) throw ParamError("not a cell reference: '" + std::string(text) + "'");
  return *ref;
}

std::string CellRef::column_name() const {
  std::string name;
  std::uint32_t c = column_;
  while (c > 0) {
    --c;
    name.push_back(static_cast<char>('A' + c % 26));
    c /= 26;
  }
  std::reverse(name.begin(), name.end());
  return name;
}

std::string CellRef::str() const { return column_name() + std::to_string(row_); }

std::ostream& operator<<(std::ostream& os, const CellRef& ref) {
  return os << ref.str();
}

std::string Label::str() const { return cell.str() + "#" + std::to_string(index); }

std::ostream& operator<<(std::ostream& os, const Label& label) {
  return os << label.str();
}

}  // namespace probsheet
