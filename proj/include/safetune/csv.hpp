#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace safetune {

// Shortest round-trip decimal form; "inf", "-inf", "nan" for non-finite.
std::string format_number(double v);

// Minimal reader for the files this library writes: '#' lines skipped,
// first remaining line is the header, comma separated, no quoting.
struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    // throws ConfigError naming the column if it is missing
    std::size_t column(std::string_view name) const;
    double number(std::size_t row, std::size_t col) const;
};

CsvTable read_csv(const std::string& path);

}  // namespace safetune
