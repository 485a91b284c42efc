#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string_view>
#include <variant>
#include <vector>

#include "numprobe/nn.hpp"
#include "numprobe/probes.hpp"

namespace numprobe::io {

// "NPW1": little-endian header, then each network as u32 width count, u32
// widths and f32 parameters in Mlp::parameters() order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class ProbeKind : std::uint8_t { kMlp = 0, kScalar = 1, kQuantile = 2, kVanilla = 3 };
std::string_view kind_name(ProbeKind kind);

using Model = std::variant<nn::Mlp, probes::ScalarProbe, probes::QuantileProbe,
                           probes::VanillaProbe>;

struct Checkpoint {
  Model model;
  double d_scale = 1.0;
  std::vector<int> layer_list;

  ProbeKind kind() const { return static_cast<ProbeKind>(model.index()); }
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace numprobe::io
