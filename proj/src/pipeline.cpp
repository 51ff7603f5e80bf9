#include "ledits/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <iomanip>
#include <sstream>
#include <thread>

#include "ledits/binary_io.hpp"
#include "ledits/error.hpp"
#include "ledits/field_io.hpp"
#include "ledits/fingerprint.hpp"
#include "ledits/inversion.hpp"
#include "ledits/shapes.hpp"

namespace ledits {

namespace {

namespace fs = std::filesystem;

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

/// Appends rows to a CSV, writing the header for a new file. The whole file is rewritten
/// atomically so readers never see a torn row.
void append_csv(const fs::path& path, const std::string& header,
                const std::vector<std::string>& rows) {
  std::string text;
  if (fs::exists(path)) {
    const auto bytes = io::read_file(path);
    text.assign(bytes.begin(), bytes.end());
    const std::string first = text.substr(0, text.find('\n'));
    if (first != header) {
      throw PipelineError("'" + path.string() + "' has a different header; move it aside");
    }
  } else {
    text = header + "\n";
  }
  for (const auto& r : rows) text += r + "\n";
  io::write_text_atomic(path, text);
}

void record_metrics(const RunConfig& config, const std::string& command, std::uint64_t seed,
                    double rmse_value, std::uint64_t evals, std::uint64_t predicted,
                    std::size_t concepts, double seconds) {
  append_csv(config.output / "metrics.csv",
             "command,config_hash,seed,rmse,model_evals,predicted_evals,concepts,wall_seconds",
             {command + "," + config.hash + "," + std::to_string(seed) + "," + fmt(rmse_value) +
              "," + std::to_string(evals) + "," + std::to_string(predicted) + "," +
              std::to_string(concepts) + "," + fmt(seconds)});
}

void require_evals(const std::string& what, std::uint64_t counted, std::uint64_t predicted) {
  if (counted != predicted) {
    throw AssertionFailure(what + ": counted " + std::to_string(counted) +
                           " model evaluations, closed form predicts " + std::to_string(predicted));
  }
}

const Conditioning* inversion_conditioning(const RunConfig& config) {
  return config.inversion_conditioning ? &*config.inversion_conditioning : nullptr;
}

/// Everything a cache-based command needs, built once from the config.
struct Session {
  NoiseSchedule schedule;
  TimestepGrid grid;
  std::unique_ptr<DenoiserModel> model;
  Field x0;

  explicit Session(const RunConfig& config)
      : schedule(build_schedule(config)),
        grid(build_grid(config)),
        model(build_model(config, schedule)),
        x0(load_input(config, *model)) {
    fs::create_directories(config.output);
  }
};

struct CacheLookup {
  EditFriendlyLatents latents;
  bool reused = false;
  std::uint64_t inversion_evals = 0;
};

/// Loads the cache for `seed`, or inverts and stores it when absent. Loaded caches are checked
/// against the schedule, model, grid and input.
CacheLookup obtain_latents(const RunConfig& config, const Session& s, std::uint64_t seed) {
  const fs::path path = cache_path(config, s.x0, s.schedule, *s.model, seed);
  CacheLookup out;
  if (fs::exists(path)) {
    out.latents = load_latents_for(path, s.schedule, *s.model);
    if (out.latents.grid.steps != s.grid.steps || out.latents.grid.start_index != s.grid.start_index ||
        out.latents.seed != seed || !bitwise_equal(out.latents.x0(), s.x0)) {
      throw StaleCacheError("cache '" + path.string() + "' does not match the configured run");
    }
    out.reused = true;
    return out;
  }
  CountingModel counter(*s.model);
  out.latents = invert(s.x0, counter, s.schedule, s.grid, seed, inversion_conditioning(config));
  out.inversion_evals = counter.evaluations();
  require_evals("inversion", out.inversion_evals, s.grid.executed_count());
  fs::create_directories(path.parent_path());
  save_latents(out.latents, path);
  return out;
}

std::string sanitize(const std::string& label) {
  std::string out;
  for (char c : label) out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  return out.empty() ? "concept" : out;
}

Field support(const Field& phi) {
  Field m(phi.shape());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = phi[i] != 0.0f ? 1.0f : 0.0f;
  return m;
}

void write_masks(const RunConfig& config, const std::vector<ConceptMasks>& masks) {
  std::vector<std::string> rows;
  for (const auto& cm : masks) {
    const MaskPair& m = cm.masks;
    const EditInstruction& e = config.edits[cm.instruction];
    rows.push_back(config.hash + "," + std::to_string(cm.instruction) + "," + sanitize(e.label) +
                   "," + std::to_string(cm.executed_step) + "," + std::to_string(cm.t) + "," +
                   fmt(m.lambda) + "," + std::to_string(m.m1_selected) + "," +
                   std::to_string(m.m2_selected) + "," + std::to_string(m.phi_selected) + "," +
                   (m.user_override ? "1" : "0"));
    if (!config.dump_masks) continue;
    const fs::path dir = config.output / "masks" /
                         ("c" + std::to_string(cm.instruction) + "_" + sanitize(e.label));
    fs::create_directories(dir);
    std::ostringstream stem;
    stem << "s" << std::setw(3) << std::setfill('0') << cm.executed_step << "_t" << cm.t;
    write_mask_pgm(dir / (stem.str() + "_m1.pgm"), m.m1);
    write_mask_pgm(dir / (stem.str() + "_m2.pgm"), m.m2);
    write_mask_pgm(dir / (stem.str() + "_phi.pgm"), support(m.phi));
  }
  append_csv(config.output / "masks.csv",
             "config_hash,concept,label,executed_step,t,lambda,m1_selected,m2_selected,"
             "phi_selected,user_mask",
             rows);
}

void write_field_outputs(const fs::path& stem, const Field& f) {
  write_field_file(fs::path(stem.string() + ".lpf"), f);
  write_preview(fs::path(stem.string() + (f.shape().channels == 3 ? ".ppm" : ".pgm")), f);
}

}  // namespace

fs::path cache_path(const RunConfig& config, const Field& x0, const NoiseSchedule& schedule,
                    const DenoiserModel& model, std::uint64_t seed) {
  io::ByteWriter w;
  w.field(x0);
  Fingerprinter fp;
  fp.text("ledits.cache-key.v1").bytes(w.bytes()).u64(seed);
  fp.bytes(schedule.fingerprint()).bytes(model.fingerprint());
  const TimestepGrid grid = build_grid(config);
  fp.u32(static_cast<std::uint32_t>(grid.steps.size()));
  for (int t : grid.steps) fp.u32(static_cast<std::uint32_t>(t));
  fp.u64(grid.start_index);
  const Conditioning* c = inversion_conditioning(config);
  fp.u32(c != nullptr);
  if (c) fp.bytes(c->fingerprint());
  return config.output / "latents" / (to_hex(fp.finish()).substr(0, 24) + ".lpl");
}

std::uint64_t predicted_generation_evals(std::size_t executed_steps,
                                         const std::vector<EditInstruction>& edits) {
  bool any_warmup = false;
  for (const auto& e : edits) any_warmup |= e.warmup_steps > 0;
  if (!any_warmup) return predicted_evaluations(0, executed_steps, edits.size());
  std::uint64_t n = executed_steps;
  for (const auto& e : edits) {
    n += executed_steps - std::min<std::size_t>(executed_steps, e.warmup_steps);
  }
  return n;
}

InvertResult cmd_invert(const RunConfig& config) {
  const Stopwatch clock;
  Session s(config);
  const std::uint64_t seed = config.inversion_seed;
  InvertResult r;
  r.executed_steps = s.grid.executed_count();

  CountingModel counter(*s.model);
  const EditFriendlyLatents latents =
      invert(s.x0, counter, s.schedule, s.grid, seed, inversion_conditioning(config));
  r.inversion_evals = counter.evaluations();
  r.cache = cache_path(config, s.x0, s.schedule, *s.model, seed);
  fs::create_directories(r.cache.parent_path());
  save_latents(latents, r.cache);

  counter.reset();
  const Field recon = reconstruct(latents, counter, s.schedule, inversion_conditioning(config));
  r.verification_evals = counter.evaluations();
  r.rmse = rmse(recon, s.x0);
  write_field_outputs(config.output / "input", s.x0);
  write_field_outputs(config.output / "reconstruction", recon);

  const std::uint64_t predicted = predicted_evaluations(r.executed_steps, r.executed_steps, 0);
  record_metrics(config, "invert", seed, r.rmse, r.inversion_evals + r.verification_evals,
                 predicted, 0, clock.seconds());
  require_evals("inversion", r.inversion_evals, r.executed_steps);
  require_evals("verification", r.verification_evals, r.executed_steps);
  return r;
}

EditResult cmd_edit(const RunConfig& config) {
  const Stopwatch clock;
  Session s(config);
  const std::uint64_t seed = config.inversion_seed;
  CacheLookup cache = obtain_latents(config, s, seed);

  CountingModel counter(*s.model);
  std::vector<ConceptMasks> masks;
  EditResult r;
  r.edited = run_edit(cache.latents, counter, s.schedule, config.edits, &masks,
                      inversion_conditioning(config));
  r.reused_cache = cache.reused;
  const std::size_t executed = s.grid.executed_count();
  const std::uint64_t gen_evals = counter.evaluations();
  const std::uint64_t gen_predicted = predicted_generation_evals(executed, config.edits);
  r.evals = cache.inversion_evals + gen_evals;
  r.predicted_evals = (cache.reused ? 0 : executed) + gen_predicted;
  r.change_rmse = rmse(r.edited, s.x0);
  r.recorded_masks = masks.size();
  r.output = config.output / "edit.lpf";

  write_field_outputs(config.output / "edit", r.edited);
  write_masks(config, masks);
  record_metrics(config, "edit", seed, r.change_rmse, r.evals, r.predicted_evals,
                 config.edits.size(), clock.seconds());
  require_evals("edit generation", gen_evals, gen_predicted);
  return r;
}

VariationsResult cmd_variations(const RunConfig& config) {
  const Stopwatch clock;
  if (config.variation_seeds.size() < 2) throw ParameterError("variations need at least two seeds");
  if (config.edits.empty()) throw ParameterError("variations need at least one edit");
  Session s(config);
  const std::size_t n = config.variation_seeds.size();
  const std::size_t executed = s.grid.executed_count();

  // Caches are produced serially (shared directory); generation fans out over worker threads.
  std::vector<CacheLookup> caches;
  std::uint64_t inversion_evals = 0;
  for (std::uint64_t seed : config.variation_seeds) {
    caches.push_back(obtain_latents(config, s, seed));
    inversion_evals += caches.back().inversion_evals;
  }

  CountingModel counter(*s.model);
  std::vector<Field> recon(n), edited(n);
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(n, std::thread::hardware_concurrency()));
  for (std::size_t begin = 0; begin < n; begin += workers) {
    std::vector<std::future<void>> jobs;
    for (std::size_t i = begin; i < std::min(n, begin + workers); ++i) {
      jobs.push_back(std::async(std::launch::async, [&, i] {
        recon[i] = run_edit(caches[i].latents, counter, s.schedule, {}, nullptr,
                            inversion_conditioning(config));
        edited[i] = run_edit(caches[i].latents, counter, s.schedule, config.edits, nullptr,
                             inversion_conditioning(config));
      }));
    }
    for (auto& j : jobs) j.get();
  }

  VariationsResult r;
  r.seeds = config.variation_seeds;
  r.pairwise_rmse.assign(n * n, 0.0);
  std::vector<std::string> rows;
  for (std::size_t i = 0; i < n; ++i) {
    r.reconstruction_rmse.push_back(rmse(recon[i], s.x0));
    write_field_outputs(config.output / ("variation_" + std::to_string(r.seeds[i])), edited[i]);
    for (std::size_t j = 0; j < n; ++j) r.pairwise_rmse[i * n + j] = rmse(edited[i], edited[j]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      rows.push_back(config.hash + "," + std::to_string(r.seeds[i]) + "," +
                     std::to_string(r.seeds[j]) + "," + fmt(r.reconstruction_rmse[i]) + "," +
                     fmt(r.reconstruction_rmse[j]) + "," + fmt(r.pairwise_rmse[i * n + j]));
    }
  }
  append_csv(config.output / "variations.csv",
             "config_hash,seed_a,seed_b,recon_rmse_a,recon_rmse_b,pairwise_rmse", rows);

  const std::uint64_t gen_predicted =
      n * (executed + predicted_generation_evals(executed, config.edits));
  double worst = 0.0;
  for (double v : r.reconstruction_rmse) worst = std::max(worst, v);
  record_metrics(config, "variations", config.inversion_seed, worst,
                 inversion_evals + counter.evaluations(), inversion_evals + gen_predicted,
                 config.edits.size(), clock.seconds());
  require_evals("variations generation", counter.evaluations(), gen_predicted);

  for (std::size_t i = 0; i < n; ++i) {
    if (!(r.reconstruction_rmse[i] <= 1e-5)) {
      throw AssertionFailure("seed " + std::to_string(r.seeds[i]) + " reconstructs with RMSE " +
                             fmt(r.reconstruction_rmse[i]) + " > 1e-5");
    }
    for (std::size_t j = i + 1; j < n; ++j) {
      if (r.seeds[i] != r.seeds[j] && !(r.pairwise_rmse[i * n + j] > 0.0)) {
        throw AssertionFailure("seeds " + std::to_string(r.seeds[i]) + " and " +
                               std::to_string(r.seeds[j]) + " produced identical edits");
      }
      if (r.seeds[i] == r.seeds[j] && !bitwise_equal(edited[i], edited[j])) {
        throw AssertionFailure("seed " + std::to_string(r.seeds[i]) + " is not deterministic");
      }
    }
  }
  return r;
}

std::vector<SweepRow> cmd_sweep_scale(const RunConfig& config) {
  const Stopwatch clock;
  if (config.scales.size() < 3) throw ParameterError("sweep-scale needs at least three scales");
  if (std::find(config.scales.begin(), config.scales.end(), 0.0) == config.scales.end()) {
    throw ParameterError("sweep-scale grid must include 0");
  }
  if (config.edits.empty()) throw ParameterError("sweep-scale needs at least one edit");
  Session s(config);
  CacheLookup cache = obtain_latents(config, s, config.inversion_seed);

  CountingModel counter(*s.model);
  const std::vector<SweepRow> rows =
      scale_sweep(cache.latents, counter, s.schedule, config.edits, config.scales);

  std::vector<std::string> lines;
  for (const auto& row : rows) {
    lines.push_back(config.hash + "," + std::to_string(config.inversion_seed) + "," +
                    fmt(row.scale) + "," + fmt(row.projection));
  }
  append_csv(config.output / "sweep_scale.csv", "config_hash,seed,scale,projection", lines);

  const std::size_t executed = s.grid.executed_count();
  const double top = *std::max_element(config.scales.begin(), config.scales.end());
  const auto others = static_cast<std::uint64_t>(
      std::count_if(config.scales.begin(), config.scales.end(), [&](double v) { return v != top; }));
  const std::uint64_t predicted =
      executed + (1 + others) * predicted_generation_evals(executed, config.edits);
  record_metrics(config, "sweep-scale", config.inversion_seed, 0.0,
                 cache.inversion_evals + counter.evaluations(),
                 (cache.reused ? 0 : executed) + predicted, config.edits.size(), clock.seconds());
  require_evals("sweep-scale", counter.evaluations(), predicted);

  // Projections are checked in ascending scale order regardless of the configured order.
  std::vector<SweepRow> sorted = rows;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const SweepRow& a, const SweepRow& b) { return a.scale < b.scale; });
  std::string offending;
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].projection < sorted[i - 1].projection - config.sweep_tolerance) {
      offending += " (" + fmt(sorted[i - 1].scale) + ": " + fmt(sorted[i - 1].projection) +
                   " -> " + fmt(sorted[i].scale) + ": " + fmt(sorted[i].projection) + ")";
    }
  }
  if (!offending.empty()) throw AssertionFailure("projection decreases at" + offending);
  return rows;
}

std::vector<ConvergenceRow> cmd_convergence(const RunConfig& config) {
  const Stopwatch clock;
  fs::create_directories(config.output);
  const NoiseSchedule schedule = build_schedule(config);
  const auto& c = config.convergence;
  const std::vector<ConvergenceRow> rows = convergence_table(schedule, c.mu, c.s, c.x_T, c.steps);

  std::vector<std::string> lines;
  std::string table;
  for (const auto& r : rows) {
    lines.push_back(config.hash + "," + std::to_string(r.steps) + "," + fmt(r.sde_w2) + "," +
                    fmt(r.sde_mean_error) + "," + fmt(r.sde_std) + "," + fmt(r.ddim_w2));
    table += "\n  steps " + std::to_string(r.steps) + ": W2 " + fmt(r.sde_w2);
  }
  append_csv(config.output / "convergence.csv",
             "config_hash,steps,sde_w2,sde_mean_error,sde_std,ddim_w2", lines);
  record_metrics(config, "convergence", 0, rows.back().sde_w2, 0, 0, 0, clock.seconds());
  if (!strictly_decreasing(rows)) {
    throw AssertionFailure("endpoint error is not strictly decreasing:" + table);
  }
  return rows;
}

MaskIouReport cmd_eval_masks(const RunConfig& config) {
  const Stopwatch clock;
  if (!config.model || config.model->kind != ModelKind::tiny) {
    throw ParameterError("eval-masks needs a tiny model with trained weights");
  }
  fs::create_directories(config.output);
  const NoiseSchedule schedule = build_schedule(config);
  const TimestepGrid grid = build_grid(config);
  const auto model = build_model(config, schedule);
  const Shape shape = model->input_shape();
  std::vector<ShapeImage> images;
  for (int i = 0; i < config.mask_eval.images; ++i) {
    images.push_back(make_shape_image(config.mask_eval.dataset_seed, static_cast<std::uint64_t>(i),
                                      shape.height, shape.width));
  }
  const int t_low = config.mask_eval.t_low >= 0 ? config.mask_eval.t_low : config.T / 4;
  const int t_high = config.mask_eval.t_high >= 0 ? config.mask_eval.t_high : 3 * config.T / 4;
  const MaskIouReport report =
      evaluate_mask_iou(*model, schedule, grid, images, config.inversion_seed, t_low, t_high);

  std::vector<std::string> lines;
  for (const auto& row : report.rows) {
    lines.push_back(config.hash + "," + std::to_string(row.t) + "," + std::to_string(row.pairs) +
                    "," + fmt(row.iou_m1) + "," + fmt(row.iou_m2) + "," + fmt(row.iou_both) +
                    "," + fmt(report.random_floor));
  }
  lines.push_back(config.hash + ",mean," + std::to_string(report.rows.front().pairs) + "," +
                  fmt(report.mean_m1) + "," + fmt(report.mean_m2) + "," + fmt(report.mean_both) +
                  "," + fmt(report.random_floor));
  append_csv(config.output / "mask_iou.csv",
             "config_hash,t,pairs,iou_m1,iou_m2,iou_intersection,random_floor", lines);
  record_metrics(config, "eval-masks", config.inversion_seed, 0.0, 0, 0, 1, clock.seconds());
  if (!report.intersection_wins()) {
    throw AssertionFailure("intersection IoU " + fmt(report.mean_both) +
                           " does not beat M1 " + fmt(report.mean_m1) + " and M2 " +
                           fmt(report.mean_m2));
  }
  return report;
}

std::vector<BenchRow> cmd_bench_evals(const RunConfig& config) {
  const Stopwatch clock;
  const NoiseSchedule schedule = build_schedule(config);
  const auto model = build_model(config, schedule);
  const Field x0 = load_input(config, *model);
  fs::create_directories(config.output);

  std::vector<double> skips{0.0};
  if (config.bench.skip != 0.0) skips.push_back(config.bench.skip);
  std::vector<BenchRow> rows;
  std::vector<std::string> lines;
  for (double skip : skips) {
    const TimestepGrid grid = build_grid(config, config.bench.steps, skip);
    CountingModel counter(*model);
    BenchRow row;
    row.skip = skip;
    row.executed_steps = grid.executed_count();
    row.concepts = config.edits.size();

    const Stopwatch inv_clock;
    const EditFriendlyLatents latents =
        invert(x0, counter, schedule, grid, config.inversion_seed, inversion_conditioning(config));
    row.inversion_seconds = inv_clock.seconds();
    row.inversion_evals = counter.evaluations();
    counter.reset();
    const Stopwatch gen_clock;
    run_edit(latents, counter, schedule, config.edits, nullptr, inversion_conditioning(config));
    row.generation_seconds = gen_clock.seconds();
    row.generation_evals = counter.evaluations();
    row.predicted = row.executed_steps + predicted_generation_evals(row.executed_steps, config.edits);
    rows.push_back(row);
    lines.push_back(config.hash + "," + fmt(skip) + "," + std::to_string(row.executed_steps) + "," +
                    std::to_string(row.concepts) + "," + std::to_string(row.inversion_evals) + "," +
                    std::to_string(row.generation_evals) + "," + std::to_string(row.predicted) +
                    "," + fmt(row.inversion_seconds) + "," + fmt(row.generation_seconds));
  }
  append_csv(config.output / "bench.csv",
             "config_hash,skip,executed_steps,concepts,inversion_evals,generation_evals,"
             "predicted_evals,inversion_seconds,generation_seconds",
             lines);
  std::uint64_t evals = 0, predicted = 0;
  for (const auto& r : rows) {
    evals += r.inversion_evals + r.generation_evals;
    predicted += r.predicted;
  }
  record_metrics(config, "bench-evals", config.inversion_seed, 0.0, evals, predicted,
                 config.edits.size(), clock.seconds());
  for (const auto& r : rows) {
    require_evals("bench skip " + fmt(r.skip), r.inversion_evals + r.generation_evals, r.predicted);
  }
  return rows;
}

TrainingExample shape_training_example(std::uint64_t dataset_seed, std::uint64_t index,
                                       const Shape& shape) {
  if (shape.channels != 1) throw ParameterError("the shape dataset is single-channel");
  ShapeImage img = make_shape_image(dataset_seed, index, shape.height, shape.width);
  return {std::move(img.x0), img.tokens()};
}

TrainingReport cmd_train_tiny(const RunConfig& config) {
  const Stopwatch clock;
  const NoiseSchedule schedule = build_schedule(config);
  const TrainingConfig& tc = config.training;
  Weights weights = init_tiny_weights(tc.architecture, tc.init_seed);
  TinyDenoiser(weights, schedule, tc.shape);  // rejects shapes the network cannot take
  fs::create_directories(config.output);
  const TrainingReport report = train_tiny_denoiser(
      weights, schedule,
      [&](std::uint64_t i) { return shape_training_example(tc.dataset_seed, i, tc.shape); },
      tc.options);
  save_weights(weights, config.output / "tiny_shapes.lpw");

  std::vector<std::string> lines;
  for (std::size_t w = 0; w < report.loss_windows.size(); ++w) {
    lines.push_back(config.hash + "," + std::to_string((w + 1) * 50) + "," +
                    fmt(report.loss_windows[w]));
  }
  append_csv(config.output / "training_loss.csv", "config_hash,step,mean_loss", lines);
  record_metrics(config, "train-tiny", tc.options.seed, report.final_loss, 0, 0, 0,
                 clock.seconds());
  return report;
}

}  // namespace ledits
