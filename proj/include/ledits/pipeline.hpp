#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ledits/config.hpp"
#include "ledits/experiments.hpp"
#include "ledits/mask_eval.hpp"
#include "ledits/tiny_denoiser.hpp"

namespace ledits {

/// Commands write into `config.output` and append one row per run to `metrics.csv` there.
/// A failed property check still writes its tables, then raises AssertionFailure.

struct InvertResult {
  std::filesystem::path cache;
  double rmse = 0.0;  // from the unguided verification pass
  std::uint64_t inversion_evals = 0;
  std::uint64_t verification_evals = 0;
  std::size_t executed_steps = 0;
};

struct EditResult {
  std::filesystem::path output;
  Field edited;
  double change_rmse = 0.0;  // edited vs x0
  bool reused_cache = false;
  std::uint64_t evals = 0;
  std::uint64_t predicted_evals = 0;
  std::size_t recorded_masks = 0;
};

struct VariationsResult {
  std::vector<std::uint64_t> seeds;
  std::vector<double> reconstruction_rmse;
  /// RMSE between the outputs of seeds i and j, row-major n x n.
  std::vector<double> pairwise_rmse;
};

struct BenchRow {
  double skip = 0.0;
  std::size_t executed_steps = 0;
  std::size_t concepts = 0;
  std::uint64_t inversion_evals = 0;
  std::uint64_t generation_evals = 0;
  std::uint64_t predicted = 0;
  double inversion_seconds = 0.0;
  double generation_seconds = 0.0;
};

/// Deterministic cache location for (input, seed, grid, schedule, model).
std::filesystem::path cache_path(const RunConfig& config, const Field& x0,
                                 const NoiseSchedule& schedule, const DenoiserModel& model,
                                 std::uint64_t seed);

/// Closed-form evaluation count of one guided generation; concepts with warmup skip their
/// conditional call on the first `warmup_steps` executed steps.
std::uint64_t predicted_generation_evals(std::size_t executed_steps,
                                         const std::vector<EditInstruction>& edits);

InvertResult cmd_invert(const RunConfig& config);
EditResult cmd_edit(const RunConfig& config);
VariationsResult cmd_variations(const RunConfig& config);
std::vector<SweepRow> cmd_sweep_scale(const RunConfig& config);
std::vector<ConvergenceRow> cmd_convergence(const RunConfig& config);
MaskIouReport cmd_eval_masks(const RunConfig& config);
std::vector<BenchRow> cmd_bench_evals(const RunConfig& config);
/// Trains the tiny denoiser on the synthetic shapes and writes `tiny_shapes.lpw`.
TrainingReport cmd_train_tiny(const RunConfig& config);

/// Shape-dataset example generator used for training (stream = example index).
TrainingExample shape_training_example(std::uint64_t dataset_seed, std::uint64_t index,
                                       const Shape& shape);

}  // namespace ledits
