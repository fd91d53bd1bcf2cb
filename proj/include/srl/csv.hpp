#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace srl::csv {

using Row = std::vector<std::string>;

/// Parsed CSV document. `line_numbers[i]` is the 1-based source line where
/// record i starts (the header is line 1).
struct Table {
    Row header;
    std::vector<Row> rows;
    std::vector<std::size_t> line_numbers;

    /// Column index of `name`; throws IngestError naming `source` if absent.
    std::size_t column(std::string_view name, std::string_view source) const;
};

/// RFC 4180 reader: comma separated, double-quote quoting with "" escapes,
/// LF or CRLF line endings, quoted fields may span lines. A UTF-8 BOM is
/// skipped. Every record must have as many fields as the header.
Table parse(std::string_view text, std::string_view source = "<memory>");
Table read_file(const std::string& path);

/// Quotes a field only when it contains a comma, quote or line break.
std::string escape(std::string_view field);

void write_row(std::ostream& out, const Row& row);

/// Shortest round-trip decimal form of a double ("%.17g" trimmed).
std::string format_double(double value);

}  // namespace srl::csv
