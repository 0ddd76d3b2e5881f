#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace flatmin {

/// Minimal CSV table. Cells are stored as preformatted strings so that the
/// byte content depends only on the values, never on locale or stream state.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  class Row {
   public:
    Row& add(const std::string& s);
    Row& add(const char* s) { return add(std::string(s)); }
    Row& add(double x);
    Row& add(long long x);
    Row& add(int x) { return add(static_cast<long long>(x)); }
    Row& add(long x) { return add(static_cast<long long>(x)); }
    Row& add(std::uint64_t x);
    Row& add(bool x) { return add(static_cast<long long>(x ? 1 : 0)); }

   private:
    friend class CsvTable;
    std::vector<std::string> cells_;
  };

  /// Appends a row; throws std::invalid_argument on a column-count mismatch.
  void push(Row row);

  const std::vector<std::string>& header() const { return header_; }
  std::size_t size() const { return rows_.size(); }
  const std::vector<std::string>& row(std::size_t i) const { return rows_.at(i); }

  void write(std::ostream& out) const;
  std::string str() const;
  /// Writes to path; throws std::runtime_error when the file cannot be written.
  void save(const std::string& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Shortest round-trip representation (%.17g), with nan/inf spelled out.
std::string format_double(double x);

}  // namespace flatmin
