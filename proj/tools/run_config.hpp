#pragma once

#include <filesystem>
#include <string>

#include "rgn/model.hpp"
#include "rgn/training.hpp"

namespace rgn::cli {

/// Everything a train/evaluate run needs. JSON layout:
///   {"model": {...}, "train": {...}, "data": {"train", "validation", "test"},
///    "output_dir": "...", "checkpoint": "..."}
/// model.num_types = 0 means "infer from the datasets".
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string train_path;
  std::string validation_path;
  std::string test_path;
  std::string output_dir = "out";
  std::string checkpoint;
};

RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& config);

}  // namespace rgn::cli
