#include "flowassoc/config.hpp"

#include <charconv>
#include <functional>
#include <limits>
#include <map>

#include "flowassoc/errors.hpp"
#include "flowassoc/mot_io.hpp"

namespace flowassoc::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const std::string& source, const Entry& e, const std::string& what) {
  throw ConfigError(source + ":" + std::to_string(e.line) + ": key '" + e.key + "': " + what);
}

double to_double(const std::string& source, const Entry& e, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) fail(source, e, "expected a number, got '" + v + "'");
  return out;
}

long long to_int(const std::string& source, const Entry& e, const std::string& v) {
  long long out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) fail(source, e, "expected an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& source, const Entry& e, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(source, e, "expected a boolean, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const std::string item = trim(v.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

using Setter = std::function<void(const std::string& source, const Entry&)>;

void apply(const Section& s, const std::string& source, const std::map<std::string, Setter>& table) {
  for (const auto& e : s.entries) {
    const auto it = table.find(e.key);
    if (it == table.end()) fail(source, e, "unknown key in [" + s.name + "]");
    it->second(source, e);
  }
}

Setter num(double& x) {
  return [&x](const std::string& src, const Entry& e) { x = to_double(src, e, e.value); };
}
Setter integer(int& x) {
  return [&x](const std::string& src, const Entry& e) {
    const long long v = to_int(src, e, e.value);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) fail(src, e, "integer out of range");
    x = static_cast<int>(v);
  };
}
Setter seed(std::uint64_t& x) {
  return [&x](const std::string& src, const Entry& e) {
    const auto r = std::from_chars(e.value.data(), e.value.data() + e.value.size(), x);
    if (r.ec != std::errc() || r.ptr != e.value.data() + e.value.size()) {
      fail(src, e, "expected an unsigned 64-bit integer, got '" + e.value + "'");
    }
  };
}
Setter flag(bool& x) {
  return [&x](const std::string& src, const Entry& e) { x = to_bool(src, e, e.value); };
}

std::map<std::string, Setter> scenario_table(sim::ScenarioConfig& c) {
  return {
      {"name", [&c](const std::string&, const Entry& e) { c.name = e.value; }},
      {"min_pedestrians", integer(c.min_pedestrians)},
      {"max_pedestrians", integer(c.max_pedestrians)},
      {"frames", integer(c.frames)},
      {"frame_rate", num(c.frame_rate)},
      {"speed_min", num(c.speed_min)},
      {"speed_max", num(c.speed_max)},
      {"heading_noise", num(c.heading_noise)},
      {"lateral_fraction", num(c.lateral_fraction)},
      {"world_x", num(c.world_x)},
      {"world_z_min", num(c.world_z_min)},
      {"world_z_max", num(c.world_z_max)},
      {"min_waypoint_distance", num(c.min_waypoint_distance)},
      {"late_spawn_fraction", num(c.late_spawn_fraction)},
      {"early_leave_fraction", num(c.early_leave_fraction)},
      {"camera_focal", num(c.camera.focal)},
      {"camera_cx", num(c.camera.cx)},
      {"camera_cy", num(c.camera.cy)},
      {"image_width", num(c.camera.image_width)},
      {"image_height", num(c.camera.image_height)},
      {"camera_height", num(c.camera.height)},
      {"camera_pitch", num(c.camera.pitch)},
      {"camera_yaw", num(c.camera.yaw)},
      {"camera_pan_rate", num(c.camera.pan_rate)},
      {"miss_base", num(c.miss_base)},
      {"miss_slope", num(c.miss_slope)},
      {"fp_rate", num(c.fp_rate)},
      {"box_jitter", num(c.box_jitter)},
      {"dist_noise", num(c.dist_noise)},
      {"dist_noise_proportional", flag(c.dist_noise_proportional)},
      {"dist_noise_reference", num(c.dist_noise_reference)},
      {"miscalibration", num(c.miscalibration)},
      {"person_height", num(c.person_height)},
      {"height_jitter", num(c.height_jitter)},
      {"seed", seed(c.seed)},
  };
}

}  // namespace

const Section* ConfigFile::find(const std::string& name) const {
  for (const auto& s : sections)
    if (s.name == name) return &s;
  return nullptr;
}

ConfigFile parse_config(const std::string& text, const std::string& source) {
  ConfigFile f;
  f.source = source;
  f.sections.push_back({"experiment", {}});
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ConfigError(source + ":" + std::to_string(line_no) + ": malformed section header '" + line + "'");
      }
      const std::string name = trim(line.substr(1, line.size() - 2));
      if (f.find(name) && name != "experiment") {
        throw ConfigError(source + ":" + std::to_string(line_no) + ": duplicate section [" + name + "]");
      }
      if (name == "experiment") continue;  // already present
      f.sections.push_back({name, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value', got '" + line + "'");
    }
    Entry e{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no};
    if (e.key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    for (const auto& other : f.sections.back().entries) {
      if (other.key == e.key) fail(source, e, "duplicate key (first set on line " + std::to_string(other.line) + ")");
    }
    f.sections.back().entries.push_back(std::move(e));
  }
  return f;
}

ConfigFile load_config(const std::string& path) { return parse_config(io::read_file(path), path); }

void apply_scenario(const Section& s, const std::string& source, sim::ScenarioConfig& cfg) {
  apply(s, source, scenario_table(cfg));
}

void apply_flow(const Section& s, const std::string& source, flow::FlowConfig& c) {
  apply(s, source,
        {
            {"blocks", integer(c.blocks)},
            {"hidden", integer(c.hidden)},
            {"context_dim", integer(c.context_dim)},
            {"gru_hidden", integer(c.gru_hidden)},
            {"embed_dim", integer(c.embed_dim)},
            {"scene_clusters", integer(c.scene_clusters)},
            {"scene_conditioning", flag(c.scene_conditioning)},
            {"learning_rate", num(c.learning_rate)},
            {"batch_size", integer(c.batch_size)},
            {"epochs", integer(c.epochs)},
            {"validation_fraction", num(c.validation_fraction)},
            {"seed", seed(c.seed)},
        });
}

void apply_tracker(const Section& s, const std::string& source, tracker::TrackerParams& p) {
  apply(s, source,
        {
            {"det_threshold", num(p.det_threshold)},
            {"n_init", integer(p.n_init)},
            {"max_age", integer(p.max_age)},
            {"gate_center_px", num(p.assoc.gate.center_px)},
            {"gate_distance_m", num(p.assoc.gate.distance_m)},
            {"sigma", num(p.assoc.sigma)},
            {"negate_before_softmax", flag(p.assoc.negate)},
            {"normalize", [&p](const std::string& src, const Entry& e) {
               p.assoc.normalize = e.value == "auto" ? -1 : (to_bool(src, e, e.value) ? 1 : 0);
             }},
            {"accept_cost", num(p.assoc.accept_cost)},
            {"max_normalized", num(p.assoc.max_normalized)},
            {"raw_last_distance", flag(p.raw_last_distance)},
            {"two_stage", flag(p.two_stage)},
            {"low_threshold", num(p.low_threshold)},
            {"second_stage_accept", num(p.second_stage_accept)},
            {"q_position", num(p.kalman.q_position)},
            {"q_size", num(p.kalman.q_size)},
            {"q_distance", num(p.kalman.q_distance)},
            {"q_velocity", num(p.kalman.q_velocity)},
            {"r_position", num(p.kalman.r_position)},
            {"r_size", num(p.kalman.r_size)},
            {"r_distance_scale", num(p.kalman.r_distance_scale)},
            {"init_velocity_var", num(p.kalman.init_velocity_var)},
        });
}

std::string format_scenario(const sim::ScenarioConfig& cfg) {
  auto d = [](double v) { return io::format_double(v); };
  const auto& c = cfg;
  const std::vector<std::pair<std::string, std::string>> kv{
      {"name", c.name},
      {"min_pedestrians", std::to_string(c.min_pedestrians)},
      {"max_pedestrians", std::to_string(c.max_pedestrians)},
      {"frames", std::to_string(c.frames)},
      {"frame_rate", d(c.frame_rate)},
      {"speed_min", d(c.speed_min)},
      {"speed_max", d(c.speed_max)},
      {"heading_noise", d(c.heading_noise)},
      {"lateral_fraction", d(c.lateral_fraction)},
      {"world_x", d(c.world_x)},
      {"world_z_min", d(c.world_z_min)},
      {"world_z_max", d(c.world_z_max)},
      {"min_waypoint_distance", d(c.min_waypoint_distance)},
      {"late_spawn_fraction", d(c.late_spawn_fraction)},
      {"early_leave_fraction", d(c.early_leave_fraction)},
      {"camera_focal", d(c.camera.focal)},
      {"camera_cx", d(c.camera.cx)},
      {"camera_cy", d(c.camera.cy)},
      {"image_width", d(c.camera.image_width)},
      {"image_height", d(c.camera.image_height)},
      {"camera_height", d(c.camera.height)},
      {"camera_pitch", d(c.camera.pitch)},
      {"camera_yaw", d(c.camera.yaw)},
      {"camera_pan_rate", d(c.camera.pan_rate)},
      {"miss_base", d(c.miss_base)},
      {"miss_slope", d(c.miss_slope)},
      {"fp_rate", d(c.fp_rate)},
      {"box_jitter", d(c.box_jitter)},
      {"dist_noise", d(c.dist_noise)},
      {"dist_noise_proportional", c.dist_noise_proportional ? "true" : "false"},
      {"dist_noise_reference", d(c.dist_noise_reference)},
      {"miscalibration", d(c.miscalibration)},
      {"person_height", d(c.person_height)},
      {"height_jitter", d(c.height_jitter)},
      {"seed", std::to_string(c.seed)},
  };
  std::string out = "[scenario]\n";
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

sim::ScenarioConfig parse_scenario(const std::string& text, const std::string& source) {
  const ConfigFile f = parse_config(text, source);
  const Section* s = f.find("scenario");
  if (!s) throw ConfigError(source + ": missing [scenario] section");
  sim::ScenarioConfig cfg;
  apply_scenario(*s, source, cfg);
  cfg.validate();
  return cfg;
}

std::vector<sim::ScenarioConfig> ExperimentConfig::suite(std::uint64_t s, bool training) const {
  std::vector<sim::ScenarioConfig> out;
  const int count = training ? train_sequences_per_preset : sequences_per_preset;
  for (std::size_t p = 0; p < presets.size(); ++p) {
    sim::ScenarioConfig base = sim::preset(presets[p]);
    apply_scenario(Section{"scenario", scenario_overrides}, overrides_source, base);
    const std::uint64_t stream = (training ? 0x7000 : 0x1000) + p;
    for (auto& c : sim::make_suite(base, count, derive_seed(s, stream))) out.push_back(std::move(c));
  }
  return out;
}

ExperimentConfig default_experiment() {
  ExperimentConfig e;
  e.flow.blocks = 4;
  e.flow.hidden = 32;
  e.flow.epochs = 15;
  e.flow.batch_size = 256;
  return e;
}

ExperimentConfig experiment_from(const ConfigFile& file) {
  ExperimentConfig e = default_experiment();
  e.overrides_source = file.source;
  for (const auto& s : file.sections) {
    if (s.name == "experiment") {
      apply(s, file.source,
            {
                {"seed", seed(e.seed)},
                {"presets", [&e](const std::string& src, const Entry& en) {
                   e.presets = split_list(en.value);
                   for (const auto& p : e.presets) {
                     try {
                       sim::preset(p);
                     } catch (const Error& ex) {
                       fail(src, en, ex.what());
                     }
                   }
                 }},
                {"sequences_per_preset", integer(e.sequences_per_preset)},
                {"train_sequences_per_preset", integer(e.train_sequences_per_preset)},
                {"seeds", integer(e.seeds)},
                {"providers", [&e](const std::string& src, const Entry& en) {
                   e.providers = split_list(en.value);
                   for (const auto& p : e.providers) {
                     if (p == "flow-gt") continue;
                     try {
                       assoc::parse_provider(p);
                     } catch (const InvalidArgument& ex) {
                       fail(src, en, ex.what());
                     }
                   }
                 }},
                {"both_conditioning", flag(e.both_conditioning)},
                {"sigmas", [&e](const std::string& src, const Entry& en) {
                   e.sigmas.clear();
                   for (const auto& v : split_list(en.value)) e.sigmas.push_back(to_double(src, en, v));
                 }},
            });
    } else if (s.name == "scenario") {
      sim::ScenarioConfig probe;
      apply_scenario(s, file.source, probe);  // validates keys up front
      e.scenario_overrides = s.entries;
    } else if (s.name == "flow") {
      apply_flow(s, file.source, e.flow);
    } else if (s.name == "tracker") {
      apply_tracker(s, file.source, e.tracker);
    } else if (s.name == "metrics") {
      apply(s, file.source,
            {{"bins", [&e](const std::string& src, const Entry& en) {
                e.bins.clear();
                for (const auto& item : split_list(en.value)) {
                  const auto dash = item.find(':');
                  if (dash == std::string::npos) fail(src, en, "bins are 'lo:hi' pairs");
                  e.bins.emplace_back(to_double(src, en, trim(item.substr(0, dash))),
                                      to_double(src, en, trim(item.substr(dash + 1))));
                }
              }}});
    } else {
      throw ConfigError(file.source + ": unknown section [" + s.name + "]");
    }
  }
  if (e.seeds < 1 || e.sequences_per_preset < 1 || e.train_sequences_per_preset < 1 || e.presets.empty()) {
    throw ConfigError(file.source + ": seeds, sequence counts and presets must be non-empty");
  }
  try {
    e.flow.validate();
    e.tracker.validate();
  } catch (const InvalidArgument& ex) {
    throw ConfigError(file.source + ": " + ex.what());
  }
  return e;
}

}  // namespace flowassoc::config
