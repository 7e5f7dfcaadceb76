#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "evidencesql/value.hpp"

namespace evidencesql {

using Json = nlohmann::json;

/// Deterministic JSON text: keys sorted, floats printed with exactly six
/// decimals, two-space indentation (or compact when indent < 0).
std::string dump_canonical(const Json& j, int indent = 2);

/// Fixed six-decimal rendering used in every serialized artifact.
std::string format_fixed6(double v);

Json value_to_json(const Value& v);
/// Inverse of value_to_json for a known column type; null stays null.
Value value_from_json(const Json& j);

std::string read_text_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// FNV-1a 64-bit, hex encoded. Used for run-directory config fingerprints.
std::string fnv1a_hex(const std::string& data);

}  // namespace evidencesql
