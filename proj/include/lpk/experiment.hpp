#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lpk/bounds.hpp"
#include "lpk/data.hpp"
#include "lpk/flow.hpp"
#include "lpk/model.hpp"
#include "lpk/stability.hpp"

namespace lpk {

/// Flat key-value configuration: `section.key = value` lines, '#' comments.
class ExperimentConfig {
 public:
  static ExperimentConfig parse_file(const std::string& path);
  static ExperimentConfig parse_string(const std::string& text);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;  // throws ConfigError when missing
  std::string get_or(const std::string& key, const std::string& dflt) const;
  double get_double(const std::string& key) const;
  double get_double_or(const std::string& key, double dflt) const;
  long get_long(const std::string& key) const;
  long get_long_or(const std::string& key, long dflt) const;
  bool get_bool_or(const std::string& key, bool dflt) const;
  std::vector<double> get_double_list(const std::string& key) const;

  void set(const std::string& key, const std::string& value);
  std::string canonical() const;  // sorted "key = value" lines
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

uint64_t fnv1a64(std::string_view bytes);
std::string hex64(uint64_t value);

struct ManifestFile {
  std::string name;
  uint64_t bytes = 0;
  std::string hash;
};

struct RunManifest {
  std::string config_hash;
  std::string artifact_version;
  double wall_clock_seconds = 0.0;
  std::vector<ManifestFile> files;
  std::vector<std::string> warnings;
};

/// Blocks assembled from a config; shared across experiment kinds.
ModelSpec model_from_config(const ExperimentConfig& cfg);
LossSpec loss_from_config(const ExperimentConfig& cfg);
FlowConfig flow_from_config(const ExperimentConfig& cfg);
Dataset dataset_from_config(const ExperimentConfig& cfg, Rng& rng);
std::optional<Dataset> test_set_from_config(const ExperimentConfig& cfg, Rng& rng);

/// Validates every block the experiment kind needs without running anything.
void validate_config(const ExperimentConfig& cfg);

/// Experiment drivers. Each writes its outputs plus manifest.json under
/// out_dir and returns the manifest. Outputs are deterministic functions of
/// (config, seed).
RunManifest run_train_bound(const ExperimentConfig& cfg, const std::string& out_dir);
RunManifest run_noise_sweep(const ExperimentConfig& cfg, const std::string& out_dir);
RunManifest run_stability(const ExperimentConfig& cfg, const std::string& out_dir);
RunManifest run_krr(const ExperimentConfig& cfg, const std::string& out_dir);
RunManifest run_ntk(const ExperimentConfig& cfg, const std::string& out_dir);
RunManifest run_single_index(const ExperimentConfig& cfg, const std::string& out_dir);

/// Dispatch on cfg "experiment"; `correlation` is handled by the train-bound
/// driver (it already emits the gamma-vs-gap traces).
RunManifest run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

constexpr const char* kArtifactVersion = "0.1.0";

}  // namespace lpk
