#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "cmap/activation_store.hpp"
#include "cmap/types.hpp"

namespace cmap {

using json = nlohmann::json;

void to_json(json& j, const LayerSpec& l);
void from_json(const json& j, LayerSpec& l);
void to_json(json& j, const ImageRecord& r);
void from_json(const json& j, ImageRecord& r);
void to_json(json& j, const Connection& c);
void from_json(const json& j, Connection& c);
void to_json(json& j, const Manifest& m);
void from_json(const json& j, Manifest& m);
void to_json(json& j, const Patch& p);
void from_json(const json& j, Patch& p);

json topk_to_json(const TopKIndex& index, const std::string& dataset_digest);
TopKIndex topk_from_json(const json& j);

json read_json_file(const std::filesystem::path& path);
/// Writes `j` with 2-space indentation and a trailing newline.
void write_json_file(const std::filesystem::path& path, const json& j);

}  // namespace cmap
