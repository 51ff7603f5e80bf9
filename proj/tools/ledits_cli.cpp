// Command-line front end. Exit codes: 0 success, 2 failed property check, 1 any other error.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ledits/config.hpp"
#include "ledits/error.hpp"
#include "ledits/pipeline.hpp"

namespace {

using namespace ledits;

RunConfig resolve_config(const std::string& config_path, const ConfigOverrides& overrides) {
  if (config_path.empty()) return parse_config("{}", std::filesystem::current_path(), overrides);
  return load_config(config_path, overrides);
}

void report(const RunConfig& cfg, const std::string& name) {
  if (name == "invert") {
    const InvertResult r = cmd_invert(cfg);
    std::printf("cache %s\nreconstruction RMSE %.3e over %zu steps\nmodel evaluations %llu + %llu\n",
                r.cache.string().c_str(), r.rmse, r.executed_steps,
                static_cast<unsigned long long>(r.inversion_evals),
                static_cast<unsigned long long>(r.verification_evals));
  } else if (name == "edit") {
    const EditResult r = cmd_edit(cfg);
    std::printf("wrote %s (%s cache)\nRMSE vs input %.4e\nmodel evaluations %llu (predicted %llu)\n",
                r.output.string().c_str(), r.reused_cache ? "reused" : "new", r.change_rmse,
                static_cast<unsigned long long>(r.evals),
                static_cast<unsigned long long>(r.predicted_evals));
  } else if (name == "variations") {
    const VariationsResult r = cmd_variations(cfg);
    const std::size_t n = r.seeds.size();
    for (std::size_t i = 0; i < n; ++i) {
      std::printf("seed %llu: reconstruction RMSE %.3e", static_cast<unsigned long long>(r.seeds[i]),
                  r.reconstruction_rmse[i]);
      for (std::size_t j = 0; j < n; ++j) std::printf(" %.4f", r.pairwise_rmse[i * n + j]);
      std::printf("\n");
    }
  } else if (name == "sweep-scale") {
    for (const auto& row : cmd_sweep_scale(cfg)) {
      std::printf("scale %8.3f  projection %.6f\n", row.scale, row.projection);
    }
  } else if (name == "convergence") {
    std::printf("%6s %12s %12s %12s\n", "steps", "sde_w2", "sde_std", "ddim_w2");
    for (const auto& row : cmd_convergence(cfg)) {
      std::printf("%6d %12.6f %12.6f %12.6f\n", row.steps, row.sde_w2, row.sde_std, row.ddim_w2);
    }
  } else if (name == "eval-masks") {
    const MaskIouReport r = cmd_eval_masks(cfg);
    for (const auto& row : r.rows) {
      std::printf("t %4d  M1 %.3f  M2 %.3f  M1*M2 %.3f\n", row.t, row.iou_m1, row.iou_m2,
                  row.iou_both);
    }
    std::printf("mean   M1 %.3f  M2 %.3f  M1*M2 %.3f  (random floor %.3f)\n", r.mean_m1, r.mean_m2,
                r.mean_both, r.random_floor);
  } else if (name == "bench-evals") {
    for (const auto& row : cmd_bench_evals(cfg)) {
      std::printf("skip %.2f: %zu steps, %zu concepts, evals %llu + %llu (predicted %llu), "
                  "%.3f s + %.3f s\n",
                  row.skip, row.executed_steps, row.concepts,
                  static_cast<unsigned long long>(row.inversion_evals),
                  static_cast<unsigned long long>(row.generation_evals),
                  static_cast<unsigned long long>(row.predicted), row.inversion_seconds,
                  row.generation_seconds);
    }
  } else if (name == "train-tiny") {
    const TrainingReport r = cmd_train_tiny(cfg);
    std::printf("final loss %.5f, weights in %s\n", r.final_loss,
                (cfg.output / "tiny_shapes.lpw").string().c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inversion, multi-concept guidance and implicit masking on toy diffusion models"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool dump_masks = false;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--out", out, "Output directory (overrides the config)");
  app.add_option("--seed", seed, "Inversion seed (overrides the config)");
  app.add_flag("--dump-masks", dump_masks, "Write per-concept, per-step mask PGMs");

  const char* commands[][2] = {
      {"invert", "Invert the input and verify the unguided reconstruction"},
      {"edit", "Apply the configured edits using the latent cache"},
      {"variations", "Edit once per variation seed and compare the outputs"},
      {"sweep-scale", "Project edits over a scale grid onto the top-scale direction"},
      {"convergence", "Solver endpoint error against the closed-form posterior"},
      {"eval-masks", "IoU of M1, M2 and their intersection on the shape dataset"},
      {"bench-evals", "Evaluation counts and wall time with and without skip"},
      {"train-tiny", "Train the tiny cross-attention denoiser on the shape dataset"},
  };
  for (const auto& c : commands) app.add_subcommand(c[0], c[1]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    ConfigOverrides overrides;
    if (!out.empty()) overrides.output = out;
    overrides.seed = seed;
    overrides.dump_masks = dump_masks;
    const RunConfig cfg = resolve_config(config_path, overrides);
    report(cfg, app.get_subcommands().front()->get_name());
    return 0;
  } catch (const AssertionFailure& e) {
    std::cerr << "assertion failed: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
