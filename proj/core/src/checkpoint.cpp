#include "numprobe/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "numprobe/error.hpp"

namespace numprobe {
namespace {

constexpr std::array<char, 4> kMagic = {'N', 'P', 'W', '1'};
constexpr std::uint32_t kMaxWidth = 1u << 24;
constexpr std::uint32_t kMaxLayers = 64;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <typename T>
  void put(T value) {
    static_assert(std::is_arithmetic_v<T>);
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
      std::reverse(bytes.begin(), bytes.end());
    out_.write(bytes.data(), sizeof(T));
  }
  void raw(const char* data, std::size_t n) { out_.write(data, static_cast<std::streamsize>(n)); }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  template <typename T>
  T get(const char* what) {
    std::array<char, sizeof(T)> bytes;
    if (!in_.read(bytes.data(), sizeof(T)))
      throw FormatError(std::string("truncated checkpoint while reading ") + what);
    if constexpr (std::endian::native == std::endian::big)
      std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
  }
  std::istream& stream() { return in_; }

 private:
  std::istream& in_;
};

void put_net(Writer& w, const nn::Mlp& net) {
  w.put(static_cast<std::uint32_t>(net.widths().size()));
  for (int width : net.widths()) w.put(static_cast<std::uint32_t>(width));
  for (double p : net.parameters()) w.put(static_cast<float>(p));
}

nn::Mlp get_net(Reader& r) {
  const auto n = r.get<std::uint32_t>("width count");
  if (n < 2 || n > kMaxLayers) throw FormatError("invalid network width count " + std::to_string(n));
  std::vector<int> widths;
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto v = r.get<std::uint32_t>("width");
    if (v == 0 || v > kMaxWidth) throw FormatError("invalid network width " + std::to_string(v));
    widths.push_back(static_cast<int>(v));
  }
  nn::Mlp net = nn::Mlp::zeros(widths);
  std::vector<double> params(net.parameter_count());
  for (auto& p : params) p = static_cast<double>(r.get<float>("parameters"));
  net.set_parameters(params);
  return net;
}

void put_range(Writer& w, const probes::MagnitudeRange& range) {
  w.put(static_cast<std::int32_t>(range.m_min));
  w.put(static_cast<std::int32_t>(range.m_max));
}

probes::MagnitudeRange get_range(Reader& r) {
  probes::MagnitudeRange range;
  range.m_min = r.get<std::int32_t>("m_min");
  range.m_max = r.get<std::int32_t>("m_max");
  if (range.m_min > range.m_max) throw FormatError("invalid magnitude range");
  return range;
}

probes::TargetKind get_target(Reader& r) {
  const auto v = r.get<std::uint8_t>("target kind");
  if (v > 2) throw FormatError("invalid target kind " + std::to_string(v));
  return static_cast<probes::TargetKind>(v);
}

probes::ScaleInput get_scale_input(Reader& r) {
  const auto v = r.get<std::uint8_t>("scale input");
  if (v > 1) throw FormatError("invalid scale input " + std::to_string(v));
  return static_cast<probes::ScaleInput>(v);
}

bool get_flag(Reader& r, const char* what) {
  const auto v = r.get<std::uint8_t>(what);
  if (v > 1) throw FormatError(std::string("invalid flag ") + what);
  return v == 1;
}

// Rewraps shape errors raised while assembling a probe from loaded parts.
template <typename F>
auto assemble(F&& f) {
  try {
    return f();
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("inconsistent checkpoint: ") + e.what());
  }
}

}  // namespace

namespace io {

std::string_view kind_name(ProbeKind kind) {
  switch (kind) {
    case ProbeKind::kMlp: return "mlp";
    case ProbeKind::kScalar: return "scalar";
    case ProbeKind::kQuantile: return "quantile";
    case ProbeKind::kVanilla: return "vanilla";
  }
  return "unknown";
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  Writer w(out);
  w.raw(kMagic.data(), kMagic.size());
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint8_t>(ckpt.kind()));
  w.put(ckpt.d_scale);
  w.put(static_cast<std::uint32_t>(ckpt.layer_list.size()));
  for (int l : ckpt.layer_list) w.put(static_cast<std::int32_t>(l));

  if (const auto* net = std::get_if<nn::Mlp>(&ckpt.model)) {
    put_net(w, *net);
  } else if (const auto* sp = std::get_if<probes::ScalarProbe>(&ckpt.model)) {
    const auto& s = sp->settings();
    put_range(w, s.range);
    w.put(static_cast<std::uint8_t>(s.target));
    w.put(static_cast<std::uint32_t>(s.top_k));
    w.put(static_cast<std::uint8_t>(s.scale_input));
    w.put(static_cast<std::uint8_t>(s.renormalise_top_k ? 1 : 0));
    put_net(w, sp->order_head());
    put_net(w, sp->value_head());
  } else if (const auto* qp = std::get_if<probes::QuantileProbe>(&ckpt.model)) {
    const auto& s = qp->settings();
    put_range(w, s.range);
    w.put(static_cast<std::uint32_t>(s.levels.size()));
    for (double tau : s.levels) w.put(tau);
    w.put(s.alpha);
    w.put(s.beta);
    w.put(static_cast<std::uint8_t>(s.scale_input));
    w.put(static_cast<std::uint8_t>(s.repair_crossing ? 1 : 0));
    for (const auto& h : qp->heads()) {
      put_net(w, h.order);
      put_net(w, h.value);
    }
  } else {
    const auto& vp = std::get<probes::VanillaProbe>(ckpt.model);
    w.put(static_cast<std::uint8_t>(vp.settings().target));
    w.put(static_cast<std::uint8_t>(vp.settings().log_scaling ? 1 : 0));
    put_net(w, vp.net());
  }
  if (!out) throw InputError("failed to write checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic)
    throw FormatError("bad magic: expected \"NPW1\"");
  Reader r(in);
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto kind = r.get<std::uint8_t>("kind");
  if (kind > 3) throw FormatError("unknown checkpoint kind " + std::to_string(kind));

  Checkpoint ckpt;
  ckpt.d_scale = r.get<double>("d_scale");
  const auto n_layers = r.get<std::uint32_t>("layer count");
  if (n_layers > 4096) throw FormatError("implausible layer count");
  for (std::uint32_t i = 0; i < n_layers; ++i)
    ckpt.layer_list.push_back(r.get<std::int32_t>("layer list"));

  switch (static_cast<ProbeKind>(kind)) {
    case ProbeKind::kMlp:
      ckpt.model = get_net(r);
      break;
    case ProbeKind::kScalar: {
      probes::ScalarSettings s;
      s.range = get_range(r);
      s.target = get_target(r);
      s.top_k = static_cast<int>(r.get<std::uint32_t>("top_k"));
      s.scale_input = get_scale_input(r);
      s.renormalise_top_k = get_flag(r, "renormalise");
      nn::Mlp order = get_net(r);
      nn::Mlp value = get_net(r);
      ckpt.model = assemble([&] {
        return probes::ScalarProbe(s, std::move(order), std::move(value));
      });
      break;
    }
    case ProbeKind::kQuantile: {
      probes::QuantileSettings s;
      s.range = get_range(r);
      const auto n = r.get<std::uint32_t>("level count");
      if (n == 0 || n > 1024) throw FormatError("invalid level count");
      s.levels.clear();
      for (std::uint32_t i = 0; i < n; ++i) s.levels.push_back(r.get<double>("levels"));
      s.alpha = r.get<double>("alpha");
      s.beta = r.get<double>("beta");
      s.scale_input = get_scale_input(r);
      s.repair_crossing = get_flag(r, "repair");
      std::vector<probes::QuantileHead> heads;
      for (std::uint32_t i = 0; i < n; ++i) {
        nn::Mlp order = get_net(r);
        nn::Mlp value = get_net(r);
        heads.push_back({std::move(order), std::move(value)});
      }
      ckpt.model = assemble([&] {
        return probes::QuantileProbe(std::move(s), std::move(heads));
      });
      break;
    }
    case ProbeKind::kVanilla: {
      probes::VanillaSettings s;
      s.target = get_target(r);
      s.log_scaling = get_flag(r, "log scaling");
      nn::Mlp net = get_net(r);
      ckpt.model = assemble([&] { return probes::VanillaProbe(s, std::move(net)); });
      break;
    }
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError("trailing bytes after checkpoint");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace io

namespace nn {

void write_mlp(std::ostream& out, const Mlp& net) {
  Writer w(out);
  put_net(w, net);
}

Mlp read_mlp(std::istream& in) {
  Reader r(in);
  return get_net(r);
}

}  // namespace nn
}  // namespace numprobe
