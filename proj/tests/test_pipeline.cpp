#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "ledits/config.hpp"
#include "ledits/error.hpp"
#include "ledits/experiments.hpp"
#include "ledits/field_io.hpp"
#include "ledits/inversion.hpp"
#include "ledits/pipeline.hpp"

using namespace ledits;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::path(LEDITS_TEST_TMP) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string gmm_config(const std::string& extra_edits = "", int steps = 20, double skip = 0.0) {
  std::ostringstream s;
  s << R"({
    "grid": {"steps": )" << steps << R"(, "skip": )" << skip << R"(},
    "model": {"type": "gmm", "shape": [1, 8, 8], "components": [
      {"mean": -0.5, "scale": 0.3, "weight": 0.25},
      {"mean": -0.5, "boxes": [{"y": 0, "x": 0, "h": 3, "w": 3, "value": 1.5}], "scale": 0.3, "weight": 0.25},
      {"mean": -0.5, "boxes": [{"y": 5, "x": 5, "h": 3, "w": 3, "value": 1.5}], "scale": 0.3, "weight": 0.25},
      {"mean": -0.5, "boxes": [{"y": 0, "x": 0, "h": 3, "w": 3, "value": 1.5},
                               {"y": 5, "x": 5, "h": 3, "w": 3, "value": 1.5}], "scale": 0.3, "weight": 0.25}]},
    "input": {"component": 0, "seed": 5},
    "edits": [)" << extra_edits << R"(]
  })";
  return s.str();
}

const std::string kTwoEdits =
    R"({"label": "A", "components": [1, 3], "scale": 4, "threshold": 0.8},
       {"label": "B", "components": [2, 3], "scale": 4, "threshold": 0.8})";

RunConfig parse_into(const std::string& text, const fs::path& out, std::uint64_t seed = 1) {
  ConfigOverrides o;
  o.output = out;
  o.seed = seed;
  return parse_config(text, fs::path(LEDITS_TEST_TMP), o);
}

}  // namespace

TEST_CASE("config parsing rejects unknown keys and bad values") {
  CHECK_THROWS_AS(parse_config(R"({"bogus": 1})", "."), ParameterError);
  CHECK_THROWS_AS(parse_config(R"({"grid": {"steps": 0}})", "."), ParameterError);
  CHECK_THROWS_AS(parse_config(R"({"grid": {"skip": 1.0}})", "."), ParameterError);
  CHECK_THROWS_AS(parse_config(R"({"schedule": {"kind": "cubic"}})", "."), ParameterError);
  CHECK_THROWS_AS(parse_config("{not json", "."), ParameterError);
  CHECK_THROWS_AS(
      parse_config(gmm_config(R"({"label": "x", "components": [9]})"), "."), ParameterError);
  CHECK_THROWS_AS(
      parse_config(gmm_config(R"({"label": "x", "components": [1], "threshold": 1.5})"), "."),
      ParameterError);
  CHECK_THROWS_AS(load_config(fs::path(LEDITS_TEST_TMP) / "missing.json"), std::exception);
}

TEST_CASE("config defaults and hash") {
  const RunConfig d = parse_config("{}", ".");
  CHECK(d.T == 1000);
  CHECK(d.grid_steps == 50);
  CHECK_FALSE(d.model.has_value());
  CHECK(d.hash.size() == 16);
  CHECK(parse_config("{}", ".").hash == d.hash);
  CHECK(parse_config(R"({"grid": {"steps": 20}})", ".").hash != d.hash);
  ConfigOverrides seeded;
  seeded.seed = 9;
  const RunConfig s = parse_config("{}", ".", seeded);
  CHECK(s.inversion_seed == 9);
  CHECK(s.hash != d.hash);
}

TEST_CASE("invert then zero-scale edit reproduces the reconstruction bitwise") {
  const fs::path out = fresh_dir("pipe_zero");
  const RunConfig inv = parse_into(gmm_config(), out);
  const InvertResult r = cmd_invert(inv);
  CHECK(fs::exists(r.cache));
  CHECK(r.rmse < 1e-5);
  CHECK(r.inversion_evals == 20);
  CHECK(r.verification_evals == 20);

  const RunConfig zero =
      parse_into(gmm_config(R"({"label": "A", "components": [1, 3], "scale": 0})"), out);
  const EditResult e = cmd_edit(zero);
  CHECK(e.reused_cache);
  const Field recon = read_field_file(out / "reconstruction.lpf");
  CHECK(bitwise_equal(e.edited, recon));
  CHECK(fs::exists(out / "metrics.csv"));
}

TEST_CASE("edit evaluation counts follow the contract") {
  const fs::path out = fresh_dir("pipe_counts");
  const EditResult full = cmd_edit(parse_into(gmm_config(kTwoEdits), out));
  CHECK_FALSE(full.reused_cache);
  // No cache yet, so the inversion is counted too.
  CHECK(full.evals == 20 + 20 * (1 + 2));
  CHECK(full.predicted_evals == full.evals);

  const fs::path out2 = fresh_dir("pipe_counts_skip");
  const RunConfig skipped = parse_into(gmm_config(kTwoEdits, 20, 0.25), out2);
  const std::size_t executed = build_grid(skipped).executed_count();
  CHECK(executed == 15);
  const EditResult e = cmd_edit(skipped);
  CHECK(e.evals == executed + executed * 3);
  CHECK(predicted_evaluations(20, 15, 2) == 65);
}

TEST_CASE("warmup lowers the predicted generation count") {
  EditInstruction a, b;
  a.warmup_steps = 5;
  b.warmup_steps = 50;
  CHECK(predicted_generation_evals(20, {a, b}) == 20 + 15 + 0);
  CHECK(predicted_generation_evals(20, {}) == 20);
}

TEST_CASE("disjoint concept edits leave the other region untouched") {
  const fs::path out = fresh_dir("pipe_disjoint");
  const RunConfig cfg =
      parse_into(gmm_config(R"({"label": "A", "components": [1, 3], "scale": 4, "threshold": 0.8})"), out);
  const EditResult only_a = cmd_edit(cfg);
  const auto sched = build_schedule(cfg);
  const Field x0 = load_input(cfg, *build_model(cfg, sched));
  double outside = 0.0;
  for (int y = 4; y < 8; ++y) {
    for (int x = 4; x < 8; ++x) outside = std::max(outside, double(std::fabs(only_a.edited.at(0, y, x) - x0.at(0, y, x))));
  }
  CHECK(outside < 1e-3);
  CHECK(only_a.change_rmse > 1e-2);
}

TEST_CASE("a cache from another seed is stale") {
  const fs::path out = fresh_dir("pipe_stale");
  const RunConfig a = parse_into(gmm_config(), out, 1);
  const InvertResult r = cmd_invert(a);
  const RunConfig b = parse_into(gmm_config(), out, 2);
  const auto sched = build_schedule(b);
  const auto model = build_model(b, sched);
  const Field x0 = load_input(b, *model);
  CHECK(cache_path(b, x0, sched, *model, 2) != r.cache);
  // Plant the seed-1 cache where the seed-2 run will look.
  fs::copy_file(r.cache, cache_path(b, x0, sched, *model, 2));
  CHECK_THROWS_AS(cmd_edit(b), StaleCacheError);
}

TEST_CASE("variations, sweep and bench on the analytic model") {
  const fs::path out = fresh_dir("pipe_misc");
  std::string text = gmm_config(kTwoEdits);
  text.insert(text.rfind('}'), R"(, "experiments": {"variation_seeds": [1, 2, 1], "scales": [0, 2, 4, 8],
                                  "bench": {"steps": 20, "skip": 0.2}})");
  const RunConfig cfg = parse_into(text, out);
  const VariationsResult v = cmd_variations(cfg);
  REQUIRE(v.seeds.size() == 3);
  CHECK(v.pairwise_rmse[0 * 3 + 2] == 0.0);
  CHECK(v.pairwise_rmse[0 * 3 + 1] > 0.0);

  const auto sweep = cmd_sweep_scale(cfg);
  REQUIRE(sweep.size() == 4);
  CHECK(sweep.front().projection == 0.0);
  CHECK(first_decrease(sweep, 1e-4) == -1);

  const auto bench = cmd_bench_evals(cfg);
  REQUIRE(bench.size() == 2);
  CHECK(bench[0].executed_steps == 20);
  CHECK(bench[1].executed_steps == 16);
  for (const auto& row : bench) CHECK(row.inversion_evals + row.generation_evals == row.predicted);
  CHECK(fs::exists(out / "bench.csv"));
}
