#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "rgn/model.hpp"

namespace rgn {

inline constexpr int kCheckpointFormatVersion = 1;

/// ModelConfig as a JSON object string; parsing rejects unknown keys and fills
/// missing keys with defaults. Pass validate=false to accept a config whose
/// num_types is still to be filled in.
std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(std::string_view text, bool validate = true);

/// {"format_version":1, "config":{...}, "params":{name:{"shape":[...],"data":[...]}},
///  "adam":{"step":n, "first_moment":{name:[...]}, "second_moment":{name:[...]}}}
std::string checkpoint_to_json(const RecurrentGraphNetwork& model);
RecurrentGraphNetwork checkpoint_from_json(std::string_view text);

void save_checkpoint(const std::filesystem::path& path, const RecurrentGraphNetwork& model);
RecurrentGraphNetwork load_checkpoint(const std::filesystem::path& path);

}  // namespace rgn
