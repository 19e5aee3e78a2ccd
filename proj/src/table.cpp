#include "hamlearn/table.hpp"

#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "hamlearn/binary_io.hpp"
#include "hamlearn/errors.hpp"

namespace hamlearn {

namespace {
constexpr const char* kSchema = "# hamlearn-table/1 ";
}

Table::Table(std::string name, std::vector<std::string> columns)
    : name_(std::move(name)), columns_(std::move(columns)) {}

void Table::add_row(std::vector<std::string> cells) {
  if (cells.size() != columns_.size()) {
    throw std::invalid_argument("row has " + std::to_string(cells.size()) + " cells, table '" + name_ +
                                "' has " + std::to_string(columns_.size()) + " columns");
  }
  rows_.push_back(std::move(cells));
}

std::string Table::str() const {
  std::string out = kSchema + name_ + "\n";
  auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += '\t';
      out += cells[i];
    }
    out += '\n';
  };
  line(columns_);
  for (const auto& r : rows_) line(r);
  return out;
}

void Table::save(const std::filesystem::path& path) const { io::write_file(path, str()); }

std::string Table::num(double v) { return fmt::format("{}", v); }
std::string Table::num(long long v) { return fmt::format("{}", v); }

Table Table::parse(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind(kSchema, 0) != 0) throw FormatError("missing table schema line");
  const std::string name = line.substr(std::string(kSchema).size());
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (std::size_t pos; (pos = s.find('\t', start)) != std::string::npos; start = pos + 1) {
      cells.push_back(s.substr(start, pos - start));
    }
    cells.push_back(s.substr(start));
    return cells;
  };
  if (!std::getline(in, line)) throw FormatError("missing table header");
  Table t(name, split(line));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.columns_.size()) throw FormatError("ragged table row");
    t.rows_.push_back(std::move(cells));
  }
  return t;
}

} // namespace hamlearn
