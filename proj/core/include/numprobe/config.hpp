#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "numprobe/eval.hpp"
#include "numprobe/nn.hpp"
#include "numprobe/pipeline.hpp"
#include "numprobe/probes.hpp"

namespace numprobe::config {

// Parameter tree of a run. Sections: seed, generate (with nested surrogate),
// probe, train, gp. Absent keys keep their defaults; unknown keys are
// rejected with ConfigError.
struct RunConfig {
  std::uint64_t seed = 0;
  pipeline::GenerateConfig generate;
  probes::ProbeConfig probe;
  nn::TrainConfig train;
  eval::GpConfig gp;

  void validate() const;
};

RunConfig parse_config(std::string_view json_text);
RunConfig load_config(const std::filesystem::path& path);
// Pretty-printed JSON of every field, including defaults.
std::string dump_config(const RunConfig& config);

}  // namespace numprobe::config
