// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace wsed {

/// Shortest decimal form that round-trips to the same double.
std::string format_number(double value);

double parse_double(std::string_view text);
std::uint64_t parse_u64(std::string_view text);

/// Splits on `sep` without quoting support.
std::vector<std::string> split(std::string_view line, char sep = ',');

/// Reads a CSV file, checks the header, and returns the data rows.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                               const std::vector<std::string>& expected_header);

void write_text_file(const std::filesystem::path& path, const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace wsed
