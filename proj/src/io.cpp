#include <fstream>
#include <sstream>

#include "narrground/binary_io.hpp"
#include "narrground/error.hpp"
#include "narrground/jsonl.hpp"

namespace narrground {

std::string binio::read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void binio::write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("write failed: " + path);
}

void jsonl::for_each_line(
    const std::string& path,
    const std::function<void(std::size_t, std::string_view)>& fn) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(line_no, line);
  }
}

std::vector<jsonl::json> jsonl::read(const std::string& path) {
  std::vector<json> out;
  for_each_line(path, [&](std::size_t line_no, std::string_view line) {
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) {
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": malformed record");
    }
    out.push_back(std::move(j));
  });
  return out;
}

std::string jsonl::dump(const std::vector<json>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

const jsonl::json& jsonl::field(const json& obj, const char* name) {
  auto it = obj.find(name);
  if (it == obj.end()) {
    throw FormatError(std::string("missing field '") + name + "'");
  }
  return *it;
}

}  // namespace narrground
