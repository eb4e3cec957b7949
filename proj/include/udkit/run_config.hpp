#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "udkit/model.hpp"
#include "udkit/training.hpp"

namespace udkit {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Everything one `train` run needs. Relative paths are resolved against the
// config file's directory.
struct RunConfig {
  std::vector<std::filesystem::path> train_files;
  std::optional<std::filesystem::path> dev_file;
  std::filesystem::path vocab_file;
  std::filesystem::path output_dir;
  TrainConfig train;
  ModelConfig model;
};

// Flat "key = value" lines; '#' starts a comment. Unknown or repeated keys
// are errors naming the key and line.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

// Keys accepted by parse_run_config.
std::vector<std::string> run_config_keys();

}  // namespace udkit
