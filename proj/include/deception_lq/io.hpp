#pragma once

#include <initializer_list>
#include <ostream>
#include <span>
#include <string>
#include <string_view>

namespace deception_lq {

/// Decimal text with 17 significant digits (round-trips any double).
std::string format_double(double x);

/// Minimal CSV writer: header row first, then numeric rows.
class CsvWriter {
 public:
  CsvWriter(std::ostream& out, std::initializer_list<std::string_view> columns);

  void row(std::initializer_list<double> values);
  void row(std::span<const double> values);
  /// Mixed rows: cells are written as given, quoted when they contain a comma
  /// or a double quote.
  void text_row(std::span<const std::string> cells);

 private:
  std::ostream& out_;
  std::size_t n_columns_;
};

}  // namespace deception_lq
