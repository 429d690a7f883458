#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace narrground::jsonl {

using json = nlohmann::ordered_json;

// Calls fn(line_number, line) for every non-blank line; line numbers are
// 1-based.
void for_each_line(const std::string& path,
                   const std::function<void(std::size_t, std::string_view)>& fn);

// Parses every non-blank line as a JSON object. Malformed lines raise
// FormatError naming the file and line.
std::vector<json> read(const std::string& path);

// One compact JSON object per line, trailing newline after each.
std::string dump(const std::vector<json>& records);

// Typed field access with a FormatError naming the missing field.
const json& field(const json& obj, const char* name);

}  // namespace narrground::jsonl
