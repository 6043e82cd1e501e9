#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "clustersim/errors.hpp"

namespace clustersim {

// Minimal CSV support for the documented file schemas: UTF-8, comma-separated,
// header row required, no quoting or embedded commas.

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    // 1-based line number of each row in the source stream (header is line 1).
    std::vector<size_t> line_numbers;

    // Index of a column, or nullopt.
    std::optional<size_t> column(const std::string& name) const;
    // Index of a mandatory column; throws ParseError naming the column.
    size_t require_column(const std::string& name) const;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

std::vector<std::string> split_csv_line(const std::string& line);

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);

// Canonical numeric formatting used by every emitted file, so that reruns are
// byte-identical.
std::string format_double(double v);

int64_t parse_int(const std::string& s, const std::string& context, size_t line);
double parse_double(const std::string& s, const std::string& context, size_t line);

}  // namespace clustersim
