#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowassoc/flow.hpp"
#include "flowassoc/metrics.hpp"
#include "flowassoc/sim.hpp"
#include "flowassoc/tracker.hpp"

namespace flowassoc::config {

// Grammar, one statement per line:
//   # comment              (also after a value)
//   [section]
//   key = value            (lists are comma separated)
// Keys before the first header belong to section "experiment".

struct Entry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

struct Section {
  std::string name;
  std::vector<Entry> entries;
};

struct ConfigFile {
  std::string source;
  std::vector<Section> sections;
  const Section* find(const std::string& name) const;
};

ConfigFile parse_config(const std::string& text, const std::string& source);
ConfigFile load_config(const std::string& path);

// Typed application. Unknown keys and malformed values raise ConfigError
// naming source, line and key.
void apply_scenario(const Section& s, const std::string& source, sim::ScenarioConfig& cfg);
void apply_flow(const Section& s, const std::string& source, flow::FlowConfig& cfg);
void apply_tracker(const Section& s, const std::string& source, tracker::TrackerParams& params);

/// Key-value text that `apply_scenario` reads back to the same config.
std::string format_scenario(const sim::ScenarioConfig& cfg);
sim::ScenarioConfig parse_scenario(const std::string& text, const std::string& source);

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::vector<std::string> presets{"easy", "moderate", "hard"};
  int sequences_per_preset = 2;        // evaluation sequences per preset and seed
  int train_sequences_per_preset = 4;  // flow training sequences per preset
  int seeds = 3;
  std::vector<std::string> providers{"iou", "euclidean", "factorized", "flow", "flow-gt"};
  /// Conditioned and unconditioned variants of the flow rows.
  bool both_conditioning = true;
  std::vector<double> sigmas{1.0};
  std::vector<Entry> scenario_overrides;
  std::string overrides_source;
  flow::FlowConfig flow;
  tracker::TrackerParams tracker;
  metrics::Bins bins = metrics::default_bins();

  /// The scenarios of one evaluation (or training) suite for a given seed.
  std::vector<sim::ScenarioConfig> suite(std::uint64_t seed, bool training) const;
};

ExperimentConfig experiment_from(const ConfigFile& file);
/// Defaults without a file.
ExperimentConfig default_experiment();

}  // namespace flowassoc::config
