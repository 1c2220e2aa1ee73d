#ifndef VDC_CSV_HPP
#define VDC_CSV_HPP

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vdc {

// Malformed or inconsistent input data (as opposed to a usage error).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Minimal RFC 4180 reader/writer: quoted fields may contain commas, quotes
// (doubled) and line breaks. CRLF and LF line endings are both accepted.
using CsvRow = std::vector<std::string>;

std::vector<CsvRow> read_csv(std::istream& in);
std::vector<CsvRow> read_csv_file(const std::string& path);
void write_csv_row(std::ostream& out, const CsvRow& row);

// Header lookup; throws naming the missing column.
std::size_t column_index(const CsvRow& header, std::string_view name);

// Shortest decimal text that reads back to the same double.
std::string format_double(double x);
double parse_double(std::string_view text, std::string_view what);
long long parse_int(std::string_view text, std::string_view what);

}  // namespace vdc

#endif  // VDC_CSV_HPP
