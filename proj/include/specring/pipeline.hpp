#pragma once

#include "specring/destripe.hpp"
#include "specring/metrics.hpp"
#include "specring/phantom.hpp"
#include "specring/recon.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace specring {

inline constexpr const char* kVersion = "0.1.0";

/// Invalid configuration or arguments, detected before any computation.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Failure inside a named pipeline stage.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& message)
      : std::runtime_error("[" + stage + "] " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Requested worker count, or the hardware concurrency when below 1; capped
/// by the SPECRING_THREADS environment variable when set.
int resolve_threads(int requested);

struct SimulationSettings {
  int num_detectors{128};
  int num_angles{90};
  double start_angle{0.0};
  double angle_increment{2.0};
  int grid_side{128};
  double pixel_size{1.0};
  int num_channels{16};
  int num_flats{8};
  GainError gain{0.05, 0.05, GainMode::spectral, false};
  double poisson_scale{1e4};
  bool noise{true};
  std::uint64_t seed{7};

  SimConfig to_sim_config() const;
};

/// Measured data in raw containers. Geometry fields left unset fall back to
/// the geometry stored in the counts metadata, then to a 180 degree sweep.
struct InputSettings {
  std::string counts;
  std::string flats;
  std::optional<double> start_angle;
  std::optional<double> angle_increment;
  std::optional<int> grid_side;
  double pixel_size{1.0};
};

/// One of the eight reconstruction pipelines, e.g. "LR-TV" or "WF-FBP"
/// ("NLM" names the sort-and-smooth filter).
struct PipelineSpec {
  std::string name;
  bool low_rank{false};
  RingFilter ring_filter{RingFilter::none};
  ReconMethod method{ReconMethod::fbp};
};

PipelineSpec parse_pipeline_name(const std::string& name);
const std::vector<std::string>& all_pipeline_names();

struct PipelineConfig {
  std::optional<SimulationSettings> simulation;
  std::optional<InputSettings> input;
  int rank{1};
  std::optional<int> use_first;
  std::vector<std::string> pipelines = all_pipeline_names();
  FbpFilter filter{FbpFilter::hann};
  WfParams wf;
  SortSmoothParams sort_smooth;
  TvConfig tv;
  std::optional<double> count_floor;
  int threads{0};
  std::optional<std::pair<Roi, Roi>> rois;
  bool quicklooks{true};

  /// Throws ConfigError on the first broken invariant.
  void validate() const;
};

/// Accepts a config document or a run manifest (whose "config" member is used).
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PipelineConfig& cfg);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

struct PipelineSummary {
  std::vector<std::filesystem::path> artifacts;
  std::optional<ChannelSelection> selection;
};

/// Writes recon/<pipeline> volumes, singular_values.csv, metrics.csv and
/// manifest.json (plus simulated inputs under data/ and truth/).
PipelineSummary run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out_dir);

/// CSV helpers shared with the CLI.
void write_singular_values_csv(const std::filesystem::path& path, const std::vector<double>& sv);

}  // namespace specring
