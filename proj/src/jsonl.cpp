#include "tokprobe/jsonl.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "tokprobe/common.hpp"

namespace tokprobe {

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file_atomic(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  static std::atomic<unsigned long> counter{0};
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  std::ostringstream tmp_name;
  tmp_name << path << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id()) << '.'
           << counter++;
  {
    std::ofstream out(tmp_name.str(), std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + tmp_name.str());
    out << contents;
    if (!out) throw std::runtime_error("write failed: " + tmp_name.str());
  }
  fs::rename(tmp_name.str(), target);
}

std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  const std::string text = read_text_file(path);
  std::vector<nlohmann::json> rows;
  std::size_t offset = 0;
  while (offset < text.size()) {
    std::size_t end = text.find('\n', offset);
    if (end == std::string::npos) end = text.size();
    const std::string_view line(text.data() + offset, end - offset);
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) {
      try {
        rows.push_back(nlohmann::json::parse(line));
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path + ": malformed JSON line: " + e.what(), offset);
      }
    }
    offset = end + 1;
  }
  return rows;
}

std::string dump_jsonl(const std::vector<nlohmann::json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

void write_jsonl(const std::vector<nlohmann::json>& rows, const std::string& path) {
  write_text_file_atomic(path, dump_jsonl(rows));
}

}  // namespace tokprobe
