#include "credo/json_file.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace credo {

namespace {

std::string format_message(const std::string& path, std::size_t line, const std::string& what) {
    std::ostringstream os;
    os << path;
    if (line > 0) os << ':' << line;
    os << ": " << what;
    return os.str();
}

std::size_t line_at(const std::string& text, std::size_t offset) {
    offset = std::min(offset, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(offset), '\n'));
}

}  // namespace

FileFormatError::FileFormatError(const std::string& path, std::size_t line, const std::string& what)
    : std::runtime_error(format_message(path, line, what)), path_(path), line_(line) {}

std::size_t JsonDocument::line_of(const std::string& needle, std::size_t after_line) const {
    const std::string quoted = "\"" + needle + "\"";
    std::size_t first = std::string::npos;
    for (std::size_t pos = text.find(quoted); pos != std::string::npos; pos = text.find(quoted, pos + 1)) {
        const std::size_t line = line_at(text, pos);
        if (first == std::string::npos) first = line;
        if (line > after_line) return line;
    }
    return first == std::string::npos ? 0 : first;
}

void JsonDocument::fail(const std::string& needle, const std::string& what) const {
    throw FileFormatError(path, needle.empty() ? 0 : line_of(needle), what);
}

JsonDocument parse_json_text(std::string text, std::string path) {
    JsonDocument doc;
    doc.path = std::move(path);
    doc.text = std::move(text);
    try {
        doc.root = nlohmann::json::parse(doc.text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FileFormatError(doc.path, line_at(doc.text, e.byte == 0 ? 0 : e.byte - 1), e.what());
    }
    return doc;
}

JsonDocument read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileFormatError(path, 0, "cannot open file");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_json_text(buffer.str(), path);
}

}  // namespace credo
