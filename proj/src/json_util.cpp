#include "policylab/json_util.hpp"

#include <fstream>
#include <sstream>

#include "policylab/error.hpp"

namespace policylab {

std::size_t line_of_offset(std::string_view text, std::size_t offset) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') ++line;
  }
  return line;
}

Json parse_json(std::string_view text, std::string_view what) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    const auto offset = e.byte == 0 ? 0 : e.byte - 1;
    const auto line = line_of_offset(text, offset);
    throw Error(ErrorCode::ParseError, std::string(what) + ": malformed JSON at line " + std::to_string(line),
                "line " + std::to_string(line));
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Internal, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorCode::Internal, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

const Json& require_field(const Json& object, std::string_view key, std::string_view path) {
  if (!object.is_object()) throw Error(ErrorCode::ParseError, std::string(path) + ": expected object", std::string(path));
  const auto it = object.find(key);
  if (it == object.end()) {
    const auto field = std::string(path) + "." + std::string(key);
    throw Error(ErrorCode::ParseError, field + ": missing", field);
  }
  return *it;
}

std::string require_string(const Json& object, std::string_view key, std::string_view path) {
  const auto& value = require_field(object, key, path);
  if (!value.is_string()) {
    const auto field = std::string(path) + "." + std::string(key);
    throw Error(ErrorCode::ParseError, field + ": expected string", field);
  }
  return value.get<std::string>();
}

std::string optional_string(const Json& object, std::string_view key, std::string_view path, std::string fallback) {
  if (!object.is_object()) throw Error(ErrorCode::ParseError, std::string(path) + ": expected object", std::string(path));
  const auto it = object.find(key);
  if (it == object.end() || it->is_null()) return fallback;
  if (!it->is_string()) {
    const auto field = std::string(path) + "." + std::string(key);
    throw Error(ErrorCode::ParseError, field + ": expected string", field);
  }
  return it->get<std::string>();
}

double require_number(const Json& object, std::string_view key, std::string_view path) {
  const auto& value = require_field(object, key, path);
  if (!value.is_number()) {
    const auto field = std::string(path) + "." + std::string(key);
    throw Error(ErrorCode::ParseError, field + ": expected number", field);
  }
  return value.get<double>();
}

}  // namespace policylab
