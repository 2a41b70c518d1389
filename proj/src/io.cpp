#include "deception_lq/io.hpp"

#include <fmt/format.h>

#include "deception_lq/errors.hpp"

namespace deception_lq {

std::string format_double(double x) {
  // -0.0 and 0.0 print identically so zero columns stay byte-stable.
  if (x == 0.0) return "0";
  return fmt::format("{:.17g}", x);
}

CsvWriter::CsvWriter(std::ostream& out, std::initializer_list<std::string_view> columns)
    : out_(out), n_columns_(columns.size()) {
  bool first = true;
  for (auto c : columns) {
    if (!first) out_ << ',';
    out_ << c;
    first = false;
  }
  out_ << '\n';
}

void CsvWriter::row(std::initializer_list<double> values) {
  row(std::span<const double>(values.begin(), values.size()));
}

void CsvWriter::row(std::span<const double> values) {
  if (values.size() != n_columns_) {
    throw Error(fmt::format("csv row has {} values, header has {}", values.size(), n_columns_));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out_ << ',';
    out_ << format_double(values[i]);
  }
  out_ << '\n';
}

void CsvWriter::text_row(std::span<const std::string> cells) {
  if (cells.size() != n_columns_) {
    throw Error(fmt::format("csv row has {} values, header has {}", cells.size(), n_columns_));
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ << ',';
    const std::string& c = cells[i];
    if (c.find_first_of(",\"\n") == std::string::npos) {
      out_ << c;
      continue;
    }
    out_ << '"';
    for (char ch : c) {
      if (ch == '"') out_ << '"';
      out_ << ch;
    }
    out_ << '"';
  }
  out_ << '\n';
}

}  // namespace deception_lq
