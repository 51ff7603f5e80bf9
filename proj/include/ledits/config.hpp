#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ledits/field.hpp"
#include "ledits/gmm_model.hpp"
#include "ledits/guidance.hpp"
#include "ledits/model.hpp"
#include "ledits/schedule.hpp"
#include "ledits/tiny_denoiser.hpp"
#include "ledits/weights.hpp"

namespace ledits {

enum class ModelKind { gmm, tiny };

struct ModelConfig {
  ModelKind kind = ModelKind::gmm;
  GmmSpec gmm;                         // kind == gmm
  std::filesystem::path weights_path;  // kind == tiny
  Weights weights;                     // kind == tiny, loaded at parse time
  Shape shape{1, 32, 32};              // kind == tiny
};

enum class InputKind { file, component, shape_image };

struct InputConfig {
  InputKind kind = InputKind::component;
  std::filesystem::path file;
  std::size_t component = 0;
  std::uint32_t index = 0;
  std::uint64_t seed = 1;
};

struct ConvergenceConfig {
  double mu = 0.5;
  double s = 0.6;
  double x_T = 1.25;
  std::vector<int> steps{4, 8, 16, 32, 64};
};

struct MaskEvalConfig {
  int images = 16;
  std::uint64_t dataset_seed = 99;
  /// Inclusive timestep window; negative values mean T/4 and 3T/4.
  int t_low = -1;
  int t_high = -1;
};

/// One grid serves both halves: inversion and generation execute the same steps after skip.
struct BenchConfig {
  int steps = 20;
  double skip = 0.2;
};

struct TrainingConfig {
  TinyArchitecture architecture;
  TrainingOptions options;
  std::uint64_t init_seed = 3;
  std::uint64_t dataset_seed = 11;
  Shape shape{1, 32, 32};
};

/// Parsed and validated run configuration. Every referenced file except the latent cache is
/// loaded during parsing, so a config that parses can run.
struct RunConfig {
  ScheduleKind schedule_kind = ScheduleKind::linear;
  int T = 1000;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  int grid_steps = 50;
  double skip = 0.0;

  std::optional<ModelConfig> model;
  std::optional<InputConfig> input;
  std::uint64_t inversion_seed = 1;
  std::optional<Conditioning> inversion_conditioning;
  std::vector<EditInstruction> edits;
  std::filesystem::path output = "out";
  bool dump_masks = false;

  std::vector<std::uint64_t> variation_seeds{1, 2};
  std::vector<double> scales{0, 2, 4, 8, 12, 16};
  double sweep_tolerance = 1e-4;
  ConvergenceConfig convergence;
  MaskEvalConfig mask_eval;
  BenchConfig bench;
  TrainingConfig training;

  /// First 16 hex digits of SHA-256 over the canonical JSON plus command-line overrides.
  std::string hash;
};

struct ConfigOverrides {
  std::optional<std::filesystem::path> output;
  std::optional<std::uint64_t> seed;
  bool dump_masks = false;
};

/// Parses JSON text. Relative paths resolve against `base_dir`. Unknown keys, bad ranges and
/// unreadable files raise ParameterError (or FormatError for malformed files).
RunConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir,
                       const ConfigOverrides& overrides = {});
RunConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

NoiseSchedule build_schedule(const RunConfig& config);
TimestepGrid build_grid(const RunConfig& config);
TimestepGrid build_grid(const RunConfig& config, int steps, double skip);
/// Throws ParameterError when the config has no model section.
std::unique_ptr<DenoiserModel> build_model(const RunConfig& config, const NoiseSchedule& schedule);
/// The configured input field; its shape must match the model. Needs an input section.
Field load_input(const RunConfig& config, const DenoiserModel& model);

}  // namespace ledits
