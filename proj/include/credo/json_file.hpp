#pragma once

#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace credo {

// Error in a user-supplied JSON file, tagged with the 1-based line it refers
// to (0 when no line could be attributed).
class FileFormatError : public std::runtime_error {
public:
    FileFormatError(const std::string& path, std::size_t line, const std::string& what);
    const std::string& path() const { return path_; }
    std::size_t line() const { return line_; }

private:
    std::string path_;
    std::size_t line_;
};

struct JsonDocument {
    std::string path;
    std::string text;
    nlohmann::json root;

    // Line of the first occurrence of the quoted token `"needle"`, preferring
    // occurrences after the line of `after` when given.
    std::size_t line_of(const std::string& needle, std::size_t after_line = 0) const;
    [[noreturn]] void fail(const std::string& needle, const std::string& what) const;
};

JsonDocument read_json_file(const std::string& path);
JsonDocument parse_json_text(std::string text, std::string path = "<inline>");

}  // namespace credo
