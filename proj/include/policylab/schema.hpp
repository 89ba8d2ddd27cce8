#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "policylab/json_util.hpp"

namespace policylab {

enum class ValueType { integer, real, text, boolean, timestamp };
enum class IdentifierClass { none, direct_identifier };

std::string_view to_string(ValueType type);
std::optional<ValueType> parse_value_type(std::string_view name);

/// Whether a (non-null) JSON value is a valid instance of `type`.
/// Timestamps are RFC 3339 strings; integers must be JSON integers.
bool value_conforms(const Json& value, ValueType type);

struct FieldSchema {
  std::string name;
  ValueType value_type = ValueType::text;
  IdentifierClass identifier_class = IdentifierClass::none;
  std::vector<std::string> rules;  // ids of validation rules documented for this field

  bool operator==(const FieldSchema&) const = default;
};

using Schema = std::vector<FieldSchema>;

const FieldSchema* find_field(std::span<const FieldSchema> schema, std::string_view name);

Json to_json(const FieldSchema& field);
FieldSchema field_schema_from_json(const Json& node, const std::string& path);

}  // namespace policylab
