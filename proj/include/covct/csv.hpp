#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace covct::csv {

// Plain comma-split; fields must not contain commas (none of the formats
// here need quoting). CR stripped so CRLF files parse.
std::vector<std::string> split_line(const std::string& line);

// All lines of a text file with line endings stripped; a trailing empty
// line is dropped. Throws DataError when the file cannot be opened.
std::vector<std::string> read_lines(const std::string& path);

// Shortest decimal string that parses back to exactly the same double.
std::string format_double(double v);

double parse_double(const std::string& s, const std::string& context);
long long parse_int(const std::string& s, const std::string& context);
uint64_t parse_u64(const std::string& s, const std::string& context);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace covct::csv
