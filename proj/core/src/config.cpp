#include "numprobe/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "numprobe/error.hpp"

namespace numprobe::config {
namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!keys.count(k))
      throw ConfigError("unknown config key '" + (section.empty() ? k : section + "." + k) + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + section + "." + key + "' has the wrong type");
  }
}

void read_surrogate(const json& j, surrogate::SurrogateConfig& s) {
  const std::string sec = "generate.surrogate";
  check_keys(j, sec, {"d_model", "n_layers", "projection_seed", "noise_floor", "layer_noise",
                      "anchor"});
  read(j, "d_model", s.d_model, sec);
  read(j, "n_layers", s.n_layers, sec);
  read(j, "projection_seed", s.projection_seed, sec);
  read(j, "noise_floor", s.noise_floor, sec);
  read(j, "layer_noise", s.layer_noise, sec);
  read(j, "anchor", s.anchor, sec);
}

void read_generate(const json& j, pipeline::GenerateConfig& g) {
  const std::string sec = "generate";
  check_keys(j, sec, {"a_grid_size", "subseqs_per_length", "n_samples", "bin_cap",
                      "layer_list", "families", "surrogate"});
  read(j, "a_grid_size", g.a_grid_size, sec);
  read(j, "subseqs_per_length", g.subseqs_per_length, sec);
  read(j, "n_samples", g.n_samples, sec);
  read(j, "bin_cap", g.bin_cap, sec);
  read(j, "layer_list", g.layer_list, sec);
  if (j.contains("families")) {
    std::vector<std::string> names;
    read(j, "families", names, sec);
    g.families.clear();
    for (const auto& n : names) g.families.push_back(datagen::parse_family(n));
  }
  if (j.contains("surrogate")) read_surrogate(j.at("surrogate"), g.surrogate);
}

void read_probe(const json& j, probes::ProbeConfig& p) {
  const std::string sec = "probe";
  check_keys(j, sec, {"min_mag", "max_mag", "alpha", "beta", "top_k", "hidden_layers",
                      "hidden_dim", "layer_list", "scale_input", "renormalise_top_k",
                      "repair_crossing", "quantile_levels"});
  read(j, "min_mag", p.min_mag, sec);
  if (j.contains("max_mag")) {
    if (j.at("max_mag").is_null()) p.max_mag.reset();
    else {
      int v = 0;
      read(j, "max_mag", v, sec);
      p.max_mag = v;
    }
  }
  read(j, "alpha", p.alpha, sec);
  read(j, "beta", p.beta, sec);
  read(j, "top_k", p.top_k, sec);
  read(j, "hidden_layers", p.hidden_layers, sec);
  read(j, "hidden_dim", p.hidden_dim, sec);
  read(j, "layer_list", p.layer_list, sec);
  if (j.contains("scale_input")) {
    std::string v;
    read(j, "scale_input", v, sec);
    p.scale_input = probes::parse_scale_input(v);
  }
  read(j, "renormalise_top_k", p.renormalise_top_k, sec);
  read(j, "repair_crossing", p.repair_crossing, sec);
  read(j, "quantile_levels", p.quantile_levels, sec);
}

void read_train(const json& j, nn::TrainConfig& t) {
  const std::string sec = "train";
  check_keys(j, sec, {"learning_rate", "weight_decay", "decoupled_weight_decay",
                      "scheduler_step_size", "scheduler_gamma", "batch_size", "max_epochs",
                      "patience"});
  read(j, "learning_rate", t.learning_rate, sec);
  read(j, "weight_decay", t.weight_decay, sec);
  read(j, "decoupled_weight_decay", t.decoupled_weight_decay, sec);
  read(j, "scheduler_step_size", t.scheduler_step_size, sec);
  read(j, "scheduler_gamma", t.scheduler_gamma, sec);
  read(j, "batch_size", t.batch_size, sec);
  read(j, "max_epochs", t.max_epochs, sec);
  read(j, "patience", t.patience, sec);
}

void read_gp(const json& j, eval::GpConfig& g) {
  const std::string sec = "gp";
  check_keys(j, sec, {"lengthscales", "noise_variances", "jitter_retries"});
  read(j, "lengthscales", g.lengthscales, sec);
  read(j, "noise_variances", g.noise_variances, sec);
  read(j, "jitter_retries", g.jitter_retries, sec);
}

}  // namespace

void RunConfig::validate() const {
  generate.validate();
  probe.validate();
  train.validate();
  gp.validate();
}

RunConfig parse_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, "", {"seed", "generate", "probe", "train", "gp"});
  RunConfig c;
  read(j, "seed", c.seed, "");
  if (j.contains("generate")) read_generate(j.at("generate"), c.generate);
  if (j.contains("probe")) read_probe(j.at("probe"), c.probe);
  if (j.contains("train")) read_train(j.at("train"), c.train);
  if (j.contains("gp")) read_gp(j.at("gp"), c.gp);
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string dump_config(const RunConfig& c) {
  json families = json::array();
  for (auto f : c.generate.families) families.push_back(std::string(datagen::family_name(f)));
  const auto& s = c.generate.surrogate;
  json j = {
      {"seed", c.seed},
      {"generate",
       {{"a_grid_size", c.generate.a_grid_size},
        {"subseqs_per_length", c.generate.subseqs_per_length},
        {"n_samples", c.generate.n_samples},
        {"bin_cap", c.generate.bin_cap},
        {"layer_list", c.generate.layer_list},
        {"families", families},
        {"surrogate",
         {{"d_model", s.d_model},
          {"n_layers", s.n_layers},
          {"projection_seed", s.projection_seed},
          {"noise_floor", s.noise_floor},
          {"layer_noise", s.layer_noise},
          {"anchor", s.anchor}}}}},
      {"probe",
       {{"min_mag", c.probe.min_mag},
        {"max_mag", c.probe.max_mag ? json(*c.probe.max_mag) : json(nullptr)},
        {"alpha", c.probe.alpha},
        {"beta", c.probe.beta},
        {"top_k", c.probe.top_k},
        {"hidden_layers", c.probe.hidden_layers},
        {"hidden_dim", c.probe.hidden_dim},
        {"layer_list", c.probe.layer_list},
        {"scale_input", std::string(probes::scale_input_name(c.probe.scale_input))},
        {"renormalise_top_k", c.probe.renormalise_top_k},
        {"repair_crossing", c.probe.repair_crossing},
        {"quantile_levels", c.probe.quantile_levels}}},
      {"train",
       {{"learning_rate", c.train.learning_rate},
        {"weight_decay", c.train.weight_decay},
        {"decoupled_weight_decay", c.train.decoupled_weight_decay},
        {"scheduler_step_size", c.train.scheduler_step_size},
        {"scheduler_gamma", c.train.scheduler_gamma},
        {"batch_size", c.train.batch_size},
        {"max_epochs", c.train.max_epochs},
        {"patience", c.train.patience}}},
      {"gp",
       {{"lengthscales", c.gp.lengthscales},
        {"noise_variances", c.gp.noise_variances},
        {"jitter_retries", c.gp.jitter_retries}}}};
  return j.dump(2) + "\n";
}

}  // namespace numprobe::config
