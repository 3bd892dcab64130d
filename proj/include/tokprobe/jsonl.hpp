#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace tokprobe {

// One JSON object per line. Blank lines are skipped on read; a malformed line
// raises ParseError carrying the byte offset of the line start.
std::vector<nlohmann::json> read_jsonl(const std::string& path);
void write_jsonl(const std::vector<nlohmann::json>& rows, const std::string& path);
std::string dump_jsonl(const std::vector<nlohmann::json>& rows);

std::string read_text_file(const std::string& path);
// Writes through a temporary sibling and renames it into place.
void write_text_file_atomic(const std::string& path, const std::string& contents);

}  // namespace tokprobe
