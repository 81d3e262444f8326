#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "cmap/json_io.hpp"

namespace cmap {

/// Validates `doc` against a JSON Schema subset: type (incl. type arrays),
/// properties, required, additionalProperties, items, enum, minimum, maximum,
/// minItems, maxItems, minLength, pattern and local "#/definitions/..." refs.
/// Returns one message per violation, prefixed with a JSON pointer.
std::vector<std::string> schema_errors(const json& schema, const json& doc);

/// Published schema by name, e.g. "clusters" or "graph".
const json& schema(std::string_view name);
std::vector<std::string> schema_names();

/// Throws Error naming `what` and the first violations.
void require_schema(std::string_view name, const json& doc, const std::string& what);

}  // namespace cmap
