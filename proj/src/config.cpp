#include "fiberlab/config.hpp"

#include "fiberlab/error.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <type_traits>

#ifndef FIBERLAB_VERSION_STRING
#define FIBERLAB_VERSION_STRING "unknown"
#endif

namespace fiberlab {

using nlohmann::json;

std::string_view to_string(Profile p) noexcept { return p == Profile::desk ? "desk" : "paper"; }

Profile parse_profile(std::string_view name) {
  if (name == "desk") return Profile::desk;
  if (name == "paper") return Profile::paper;
  throw ConfigError("unknown profile '" + std::string(name) + "' (expected desk or paper)");
}

namespace {

std::string_view to_string(StepPlan::Mode m) noexcept { return m == StepPlan::Mode::fixed ? "fixed" : "adaptive"; }

StepPlan::Mode parse_mode(const std::string& s) {
  if (s == "fixed") return StepPlan::Mode::fixed;
  if (s == "adaptive") return StepPlan::Mode::adaptive;
  throw ConfigError("step_plan.mode: unknown mode '" + s + "' (expected fixed or adaptive)");
}

std::string_view to_string(PropagatorKind k) noexcept { return k == PropagatorKind::ssfm ? "ssfm" : "pino"; }

PropagatorKind parse_propagator(const std::string& s) {
  if (s == "ssfm") return PropagatorKind::ssfm;
  if (s == "pino") return PropagatorKind::pino;
  throw ConfigError("link.propagator: unknown propagator '" + s + "' (expected ssfm or pino)");
}

// Reads one JSON object, remembering which keys were consumed so that
// leftovers (typos) can be reported.
class Section {
public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError("");
      }
      out = it->get<T>();
    } catch (const std::exception&) {
      throw ConfigError(where(key) + ": wrong type (" + std::string(it->type_name()) + ")");
    }
  }

  template <typename T>
  void get_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    if (it->is_null()) {
      out.reset();
      return;
    }
    T v{};
    get(key, v);
    out = v;
  }

  Section child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    static const json empty = json::object();
    return Section(it == j_.end() ? empty : *it, where(key));
  }

  bool has(const char* key) const { return j_.contains(key); }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown config key '" + where(k.c_str()) + "'");
    }
  }

  std::string where(const char* key = nullptr) const {
    if (!key) return path_.empty() ? "config" : path_;
    return path_.empty() ? std::string(key) : path_ + "." + key;
  }

private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + " must be a finite value > 0");
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults(Profile profile) {
  ExperimentConfig c;
  c.profile = profile;
  if (profile == Profile::paper) {
    c.transmitter.samples_per_symbol = 16;
    c.transmitter.validation_symbols = 1024;
    c.transmitter.test_symbols = 8192;
    c.step_plan.dz_km = 0.1;
    c.training.steps = 20000;
    c.training.learning_rate = 1e-3;
    c.training.lr_decay_interval = 0;
    c.training.collocation_count = 4096;
    c.training.validation_every = 1000;
    c.training.transfer_steps = 5000;
    c.training.transfer_learning_rate = 6.25e-5;
    c.bench.n_symbols = {8192, 131072};
    c.output_dir = "runs/paper";
  }
  return c;
}

void ExperimentConfig::validate() const {
  const auto& t = transmitter;
  positive(t.symbol_rate_baud, "transmitter.symbol_rate_baud");
  if (t.samples_per_symbol < 1) throw ConfigError("transmitter.samples_per_symbol must be >= 1");
  if (!(t.rolloff >= 0.0 && t.rolloff <= 1.0)) throw ConfigError("transmitter.rolloff must lie in [0, 1]");
  if (std::isnan(t.osnr_db)) throw ConfigError("transmitter.osnr_db must not be NaN");
  for (double p : t.powers_dbm) {
    if (!std::isfinite(p)) throw ConfigError("transmitter.powers_dbm entries must be finite");
  }
  framing.validate();
  for (auto [n, name] : {std::pair{t.train_symbols, "train_symbols"}, {t.validation_symbols, "validation_symbols"},
                         {t.test_symbols, "test_symbols"}}) {
    if (n <= 0 || n % framing.core_m != 0) {
      throw ConfigError(std::string("transmitter.") + name + " must be a positive multiple of framing.core_m");
    }
  }
  fiber.validate();
  plan().validate();
  if (link.spans < 0) throw ConfigError("link.spans must be >= 0");
  link_config().validate();
  if (network.q_embed < 1) throw ConfigError("network.q_embed must be >= 1");
  for (int w : network.trunk_hidden) {
    if (w < 1) throw ConfigError("network.trunk_hidden widths must be >= 1");
  }
  for (int w : network.branch_hidden) {
    if (w < 1) throw ConfigError("network.branch_hidden widths must be >= 1");
  }
  positive(network.trunk_time_init_scale, "network.trunk_time_init_scale");
  positive(network.branch_input_init_scale, "network.branch_input_init_scale");
  train_config(training.steps).validate();
  if (training.transfer_steps <= 0) throw ConfigError("training.transfer_steps must be > 0");
  positive(training.transfer_learning_rate, "training.transfer_learning_rate");
  if (dbp.steps_per_span && *dbp.steps_per_span <= 0) throw ConfigError("dbp.steps_per_span must be > 0");
  if (bench.iterations < 5) throw ConfigError("bench.iterations must be >= 5");
  if (bench.warmup < 1) throw ConfigError("bench.warmup must be >= 1");
  if (bench.distances_km.empty() || bench.n_symbols.empty()) throw ConfigError("bench needs distances and sizes");
  for (double d : bench.distances_km) {
    positive(d, "bench.distances_km entries");
    const double spans = d / fiber.length_km;
    if (std::abs(spans - std::round(spans)) > 1e-9) {
      throw ConfigError("bench.distances_km entries must be whole multiples of fiber.length_km");
    }
  }
  for (auto n : bench.n_symbols) {
    if (n <= 0 || n % framing.core_m != 0) {
      throw ConfigError("bench.n_symbols entries must be positive multiples of framing.core_m");
    }
  }
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

TransmitterConfig ExperimentConfig::transmitter_config() const {
  TransmitterConfig tx;
  tx.format = transmitter.format;
  tx.symbol_rate = transmitter.symbol_rate_baud;
  tx.samples_per_symbol = transmitter.samples_per_symbol;
  tx.rolloff = transmitter.rolloff;
  tx.osnr_db = transmitter.osnr_db;
  return tx;
}

StepPlan ExperimentConfig::plan() const {
  StepPlan p;
  p.mode = step_plan.mode;
  p.dz_km = step_plan.dz_km;
  p.max_nonlinear_phase_rad = step_plan.max_nonlinear_phase_rad;
  return p;
}

LinkConfig ExperimentConfig::link_config() const {
  EdfaSpec edfa;
  edfa.noise_figure_db = link.noise_figure_db;
  edfa.center_frequency_hz = link.center_frequency_hz;
  LinkConfig lc = LinkConfig::uniform(std::max(0, link.spans), fiber, edfa);
  if (link.gain_db) {
    for (auto& s : lc.spans) {
      s.auto_gain = false;
      s.edfa.gain_db = *link.gain_db;
    }
  }
  lc.propagator = link.propagator;
  lc.step_plan = plan();
  lc.framing = framing;
  for (const auto& m : link.models) lc.models.emplace_back(m);
  return lc;
}

OperatorArchitecture ExperimentConfig::architecture() const {
  OperatorArchitecture a;
  a.trunk_hidden = network.trunk_hidden;
  a.branch_hidden = network.branch_hidden;
  a.q_embed = network.q_embed;
  a.input_dim_m = framing.frame_symbols() * transmitter.samples_per_symbol;
  a.trunk_time_init_scale = network.trunk_time_init_scale;
  a.branch_input_init_scale = network.branch_input_init_scale;
  return a;
}

CoordScales ExperimentConfig::coord_scales() const {
  CoordScales s;
  s.z_scale_km = fiber.length_km;
  s.t_scale_s = framing.frame_symbols() / transmitter.symbol_rate_baud;
  return s;
}

TrainConfig ExperimentConfig::train_config(std::int64_t steps) const {
  TrainConfig c;
  c.steps = steps;
  c.batch_frames = training.batch_frames;
  c.learning_rate = training.learning_rate;
  c.lr_decay_factor = training.lr_decay_factor;
  c.lr_decay_interval = training.lr_decay_interval;
  c.w_pde = training.w_pde;
  c.w_ic = training.w_ic;
  c.collocation_count = training.collocation_count;
  c.seed = seeds.train;
  c.validation_every = training.validation_every;
  return c;
}

TrainConfig ExperimentConfig::transfer_config() const {
  TrainConfig c = train_config(training.transfer_steps);
  c.learning_rate = training.transfer_learning_rate;
  c.lr_decay_factor = 1.0;
  return c;
}

ExperimentConfig config_from_json(const json& j) {
  Section root(j, "");
  std::string profile_name = "desk";
  root.get("profile", profile_name);
  ExperimentConfig c = ExperimentConfig::defaults(parse_profile(profile_name));

  {
    Section s = root.child("transmitter");
    std::string fmt(to_string(c.transmitter.format));
    s.get("format", fmt);
    c.transmitter.format = parse_modulation_format(fmt);
    s.get("symbol_rate_baud", c.transmitter.symbol_rate_baud);
    s.get("samples_per_symbol", c.transmitter.samples_per_symbol);
    s.get("rolloff", c.transmitter.rolloff);
    // JSON has no infinity; null turns the noise loading off
    if (s.has("osnr_db") && j.at("transmitter").at("osnr_db").is_null()) {
      std::optional<double> none;
      s.get_optional("osnr_db", none);
      c.transmitter.osnr_db = kNoiseDisabled;
    } else {
      s.get("osnr_db", c.transmitter.osnr_db);
    }
    s.get("powers_dbm", c.transmitter.powers_dbm);
    s.get("train_symbols", c.transmitter.train_symbols);
    s.get("validation_symbols", c.transmitter.validation_symbols);
    s.get("test_symbols", c.transmitter.test_symbols);
    s.finish();
  }
  {
    Section s = root.child("framing");
    s.get("core_m", c.framing.core_m);
    s.get("guard_n", c.framing.guard_n);
    s.finish();
  }
  {
    Section s = root.child("fiber");
    s.get("alpha_db_per_km", c.fiber.alpha_db_per_km);
    s.get("beta2_ps2_per_km", c.fiber.beta2_ps2_per_km);
    s.get("gamma_per_w_km", c.fiber.gamma_per_w_km);
    s.get("length_km", c.fiber.length_km);
    s.finish();
  }
  {
    Section s = root.child("step_plan");
    std::string mode(to_string(c.step_plan.mode));
    s.get("mode", mode);
    c.step_plan.mode = parse_mode(mode);
    s.get("dz_km", c.step_plan.dz_km);
    s.get("max_nonlinear_phase_rad", c.step_plan.max_nonlinear_phase_rad);
    s.finish();
  }
  {
    Section s = root.child("link");
    s.get("spans", c.link.spans);
    s.get_optional("gain_db", c.link.gain_db);
    if (s.has("noise_figure_db") && j.at("link").at("noise_figure_db").is_null()) {
      std::optional<double> none;
      s.get_optional("noise_figure_db", none);
      c.link.noise_figure_db = kNoiseFigureDisabled;
    } else {
      s.get("noise_figure_db", c.link.noise_figure_db);
    }
    s.get("center_frequency_hz", c.link.center_frequency_hz);
    std::string prop(to_string(c.link.propagator));
    s.get("propagator", prop);
    c.link.propagator = parse_propagator(prop);
    s.get("models", c.link.models);
    s.finish();
  }
  {
    Section s = root.child("network");
    s.get("trunk_hidden", c.network.trunk_hidden);
    s.get("branch_hidden", c.network.branch_hidden);
    s.get("q_embed", c.network.q_embed);
    s.get("trunk_time_init_scale", c.network.trunk_time_init_scale);
    s.get("branch_input_init_scale", c.network.branch_input_init_scale);
    s.finish();
  }
  {
    Section s = root.child("training");
    s.get("steps", c.training.steps);
    s.get("batch_frames", c.training.batch_frames);
    s.get("learning_rate", c.training.learning_rate);
    s.get("lr_decay_factor", c.training.lr_decay_factor);
    s.get("lr_decay_interval", c.training.lr_decay_interval);
    s.get("w_pde", c.training.w_pde);
    s.get("w_ic", c.training.w_ic);
    s.get("collocation_count", c.training.collocation_count);
    s.get("validation_every", c.training.validation_every);
    s.get("transfer_steps", c.training.transfer_steps);
    s.get("transfer_learning_rate", c.training.transfer_learning_rate);
    s.finish();
  }
  {
    Section s = root.child("dbp");
    s.get_optional("steps_per_span", c.dbp.steps_per_span);
    s.finish();
  }
  {
    Section s = root.child("bench");
    s.get("distances_km", c.bench.distances_km);
    s.get("n_symbols", c.bench.n_symbols);
    s.get("iterations", c.bench.iterations);
    s.get("warmup", c.bench.warmup);
    s.finish();
  }
  {
    Section s = root.child("seeds");
    s.get("data", c.seeds.data);
    s.get("init", c.seeds.init);
    s.get("train", c.seeds.train);
    s.get("link", c.seeds.link);
    s.get("validation", c.seeds.validation);
    s.get("test", c.seeds.test);
    s.finish();
  }
  std::string out = c.output_dir.string();
  root.get("output_dir", out);
  c.output_dir = out;
  root.finish();
  c.validate();
  return c;
}

json to_json(const ExperimentConfig& c) {
  auto finite_or_null = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json j;
  j["profile"] = to_string(c.profile);
  j["transmitter"] = {{"format", to_string(c.transmitter.format)},
                      {"symbol_rate_baud", c.transmitter.symbol_rate_baud},
                      {"samples_per_symbol", c.transmitter.samples_per_symbol},
                      {"rolloff", c.transmitter.rolloff},
                      {"osnr_db", finite_or_null(c.transmitter.osnr_db)},
                      {"powers_dbm", c.transmitter.powers_dbm},
                      {"train_symbols", c.transmitter.train_symbols},
                      {"validation_symbols", c.transmitter.validation_symbols},
                      {"test_symbols", c.transmitter.test_symbols}};
  j["framing"] = {{"core_m", c.framing.core_m}, {"guard_n", c.framing.guard_n}};
  j["fiber"] = {{"alpha_db_per_km", c.fiber.alpha_db_per_km},
                {"beta2_ps2_per_km", c.fiber.beta2_ps2_per_km},
                {"gamma_per_w_km", c.fiber.gamma_per_w_km},
                {"length_km", c.fiber.length_km}};
  j["step_plan"] = {{"mode", to_string(c.step_plan.mode)},
                    {"dz_km", c.step_plan.dz_km},
                    {"max_nonlinear_phase_rad", c.step_plan.max_nonlinear_phase_rad}};
  j["link"] = {{"spans", c.link.spans},
               {"gain_db", c.link.gain_db ? json(*c.link.gain_db) : json(nullptr)},
               {"noise_figure_db", finite_or_null(c.link.noise_figure_db)},
               {"center_frequency_hz", c.link.center_frequency_hz},
               {"propagator", to_string(c.link.propagator)},
               {"models", c.link.models}};
  j["network"] = {{"trunk_hidden", c.network.trunk_hidden},
                  {"branch_hidden", c.network.branch_hidden},
                  {"q_embed", c.network.q_embed},
                  {"trunk_time_init_scale", c.network.trunk_time_init_scale},
                  {"branch_input_init_scale", c.network.branch_input_init_scale}};
  j["training"] = {{"steps", c.training.steps},
                   {"batch_frames", c.training.batch_frames},
                   {"learning_rate", c.training.learning_rate},
                   {"lr_decay_factor", c.training.lr_decay_factor},
                   {"lr_decay_interval", c.training.lr_decay_interval},
                   {"w_pde", c.training.w_pde},
                   {"w_ic", c.training.w_ic},
                   {"collocation_count", c.training.collocation_count},
                   {"validation_every", c.training.validation_every},
                   {"transfer_steps", c.training.transfer_steps},
                   {"transfer_learning_rate", c.training.transfer_learning_rate}};
  j["dbp"] = {{"steps_per_span", c.dbp.steps_per_span ? json(*c.dbp.steps_per_span) : json(nullptr)}};
  j["bench"] = {{"distances_km", c.bench.distances_km},
                {"n_symbols", c.bench.n_symbols},
                {"iterations", c.bench.iterations},
                {"warmup", c.bench.warmup}};
  j["seeds"] = {{"data", c.seeds.data},           {"init", c.seeds.init},
                {"train", c.seeds.train},         {"link", c.seeds.link},
                {"validation", c.seeds.validation}, {"test", c.seeds.test}};
  j["output_dir"] = c.output_dir.generic_string();
  return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("config file '" + path.string() + "' not found");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
  return config_from_json(j);
}

json apply_overrides(json doc, const std::vector<std::string>& assignments) {
  struct Assignment {
    std::string key;
    json value;
  };
  std::vector<Assignment> parsed;
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + a + "' is not key=value");
    const std::string raw = a.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::exception&) {
      value = raw;
    }
    parsed.push_back({a.substr(0, eq), std::move(value)});
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  // the profile decides every default, so it is applied before anything else
  for (const auto& a : parsed) {
    if (a.key == "profile") doc["profile"] = a.value;
  }
  const json profile = doc.value("profile", json("desk"));
  if (!profile.is_string()) throw ConfigError("profile must be a string");
  json resolved = to_json(ExperimentConfig::defaults(parse_profile(profile.get<std::string>())));
  resolved.merge_patch(doc);
  for (const auto& a : parsed) {
    if (a.key == "profile") continue;
    json* node = &resolved;
    std::size_t start = 0;
    while (true) {
      const auto dot = a.key.find('.', start);
      const std::string part = a.key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key '" + a.key + "'");
      node = &(*node)[part];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    *node = a.value;
  }
  return resolved;
}

std::string version_string() { return FIBERLAB_VERSION_STRING; }

}  // namespace fiberlab
