#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace hamlearn {

/// Tab-separated report table.
///
/// Output starts with a schema line "# hamlearn-table/1 <name>", then a
/// header row, then data rows. Doubles are written in shortest round-trip
/// form so identical runs produce identical bytes.
class Table {
public:
  Table(std::string name, std::vector<std::string> columns);

  void add_row(std::vector<std::string> cells);

  const std::string& name() const noexcept { return name_; }
  const std::vector<std::string>& columns() const noexcept { return columns_; }
  const std::vector<std::vector<std::string>>& rows() const noexcept { return rows_; }

  std::string str() const;
  void save(const std::filesystem::path& path) const;

  static std::string num(double v);
  static std::string num(long long v);
  static std::string num(int v) { return num(static_cast<long long>(v)); }
  static std::string num(std::size_t v) { return num(static_cast<long long>(v)); }

  /// Parses text produced by str(). Throws FormatError on malformed input.
  static Table parse(const std::string& text);

private:
  std::string name_;
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

} // namespace hamlearn
