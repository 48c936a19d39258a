#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace credo {

// Shortest decimal text of v at 12 significant digits.
std::string format_real(double v);
// v rounded to 12 significant digits.
double round12(double v);

// Copy of j with every floating-point number rounded to 12 significant digits.
nlohmann::json rounded(const nlohmann::json& j);

// Writes through a temporary file in the same directory, then renames.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace credo
