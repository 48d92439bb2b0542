#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "mcat/nets.hpp"

namespace mcat {

/// Checkpoint layout: one line of JSON describing every role (shapes, seeds,
/// flags) and the parameter blocks, a '\n', then the blocks themselves as
/// little-endian IEEE-754 doubles in the order listed under "blocks".
/// `extra` lands under the header's "config" key.
std::string serialize_checkpoint(const ModelBundle& model, const nlohmann::json& extra = {});

struct LoadedCheckpoint {
  ModelBundle model;
  nlohmann::json config;
};

/// Throws FormatError on a malformed or truncated checkpoint.
LoadedCheckpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& model, const nlohmann::json& extra = {});
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mcat
