#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace policylab {

using Json = nlohmann::ordered_json;

/// Parses JSON, converting syntax errors to Error(ParseError) with a
/// `line N` detail.
Json parse_json(std::string_view text, std::string_view what);

std::string read_file(const std::filesystem::path& path);

/// Writes via a temporary sibling file and rename so readers never see a
/// partially written document.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// 1-based line number of byte offset `offset` in `text`.
std::size_t line_of_offset(std::string_view text, std::size_t offset);

/// Field accessors that raise Error(ParseError) naming the offending path.
const Json& require_field(const Json& object, std::string_view key, std::string_view path);
std::string require_string(const Json& object, std::string_view key, std::string_view path);
std::string optional_string(const Json& object, std::string_view key, std::string_view path,
                            std::string fallback = {});
double require_number(const Json& object, std::string_view key, std::string_view path);

}  // namespace policylab
