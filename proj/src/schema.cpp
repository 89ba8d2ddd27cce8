#include "policylab/schema.hpp"

#include "policylab/error.hpp"
#include "policylab/timestamp.hpp"

namespace policylab {

std::string_view to_string(ValueType type) {
  switch (type) {
    case ValueType::integer: return "integer";
    case ValueType::real: return "real";
    case ValueType::text: return "text";
    case ValueType::boolean: return "boolean";
    case ValueType::timestamp: return "timestamp";
  }
  return "text";
}

std::optional<ValueType> parse_value_type(std::string_view name) {
  if (name == "integer") return ValueType::integer;
  if (name == "real") return ValueType::real;
  if (name == "text") return ValueType::text;
  if (name == "boolean") return ValueType::boolean;
  if (name == "timestamp") return ValueType::timestamp;
  return std::nullopt;
}

bool value_conforms(const Json& value, ValueType type) {
  switch (type) {
    case ValueType::integer: return value.is_number_integer();
    case ValueType::real: return value.is_number();
    case ValueType::text: return value.is_string();
    case ValueType::boolean: return value.is_boolean();
    case ValueType::timestamp: return value.is_string() && parse_rfc3339(value.get_ref<const std::string&>()).has_value();
  }
  return false;
}

const FieldSchema* find_field(std::span<const FieldSchema> schema, std::string_view name) {
  for (const auto& field : schema) {
    if (field.name == name) return &field;
  }
  return nullptr;
}

Json to_json(const FieldSchema& field) {
  Json out = Json::object();
  out["name"] = field.name;
  out["type"] = to_string(field.value_type);
  out["identifier"] = field.identifier_class == IdentifierClass::direct_identifier ? "direct_identifier" : "none";
  out["rules"] = field.rules;
  return out;
}

FieldSchema field_schema_from_json(const Json& node, const std::string& path) {
  FieldSchema field;
  field.name = require_string(node, "name", path);
  if (field.name.empty()) throw Error(ErrorCode::ParseError, path + ".name: empty", path + ".name");
  const auto type = require_string(node, "type", path);
  const auto parsed = parse_value_type(type);
  if (!parsed) throw Error(ErrorCode::ParseError, path + ".type: unknown type '" + type + "'", path + ".type");
  field.value_type = *parsed;
  const auto ident = optional_string(node, "identifier", path, "none");
  if (ident == "direct_identifier") field.identifier_class = IdentifierClass::direct_identifier;
  else if (ident != "none") throw Error(ErrorCode::ParseError, path + ".identifier: expected none or direct_identifier", path + ".identifier");
  if (node.contains("rules")) {
    const auto& rules = node["rules"];
    if (!rules.is_array()) throw Error(ErrorCode::ParseError, path + ".rules: expected array", path + ".rules");
    for (const auto& r : rules) {
      if (!r.is_string()) throw Error(ErrorCode::ParseError, path + ".rules: expected rule ids", path + ".rules");
      field.rules.push_back(r.get<std::string>());
    }
  }
  return field;
}

}  // namespace policylab
