#include "ledits/inversion.hpp"

#include <algorithm>

#include "ledits/binary_io.hpp"
#include "ledits/error.hpp"
#include "ledits/random.hpp"
#include "ledits/sampler.hpp"

namespace ledits {

std::vector<Field> build_reconstruction_sequence(const Field& x0, const NoiseSchedule& schedule,
                                                 const TimestepGrid& grid, std::uint64_t seed) {
  if (!x0.all_finite()) throw ParameterError("input field has non-finite values");
  std::vector<Field> seq;
  seq.reserve(grid.size() + 1);
  for (int t : grid.steps) {
    const double a = schedule.signal(t);
    const double s = schedule.noise(t);
    const Field noise = gaussian_field(seed, NoiseDomain::reconstruction,
                                       static_cast<std::uint32_t>(t), x0.shape());
    Field x(x0.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = static_cast<float>(a * x0[i] + s * noise[i]);
    }
    seq.push_back(std::move(x));
  }
  seq.push_back(x0);
  return seq;
}

NoiseMaps extract_noise_maps(const std::vector<Field>& x_seq, const DenoiserModel& model,
                             const NoiseSchedule& schedule, const TimestepGrid& grid,
                             const Conditioning* inversion_conditioning) {
  if (x_seq.size() != grid.size() + 1) {
    throw ParameterError("reconstruction sequence has " + std::to_string(x_seq.size()) +
                         " entries, grid needs " + std::to_string(grid.size() + 1));
  }
  NoiseMaps out;
  out.z_seq.reserve(grid.executed_count());
  std::optional<Field> prev_denoised;
  std::optional<int> prev_t;
  // Track the generator's own float trajectory so rounding never compounds through the model.
  Field x_t = x_seq[grid.start_index];
  for (std::size_t i = grid.start_index; i < grid.size(); ++i) {
    const int t = grid.steps[i];
    const int t_prev = grid.next_step(i);
    const Field& target = x_seq[i + 1];
    const Field eps = model.eps(x_t, t, inversion_conditioning).eps;
    Field denoised = predict_clean(schedule, x_t, eps, t);
    const StepMean m = dpmpp_2m_sde_mean(schedule, x_t, denoised,
                                         prev_denoised ? &*prev_denoised : nullptr, t, t_prev,
                                         prev_t);
    Field z(x_t.shape());
    if (m.sigma > 0.0) {
      for (std::size_t k = 0; k < z.size(); ++k) {
        z[k] = static_cast<float>((static_cast<double>(target[k]) - m.mean[k]) / m.sigma);
      }
    } else {
      Field delta(x_t.shape());
      for (std::size_t k = 0; k < delta.size(); ++k) delta[k] = target[k] - m.mean[k];
      out.residuals.push_back({out.z_seq.size(), delta});
    }
    Field next = step_dpmpp_2m_sde(schedule, x_t, denoised,
                                   prev_denoised ? &*prev_denoised : nullptr, t, t_prev, prev_t, z);
    if (m.sigma <= 0.0) {
      const Field& delta = out.residuals.back().delta;
      for (std::size_t k = 0; k < next.size(); ++k) next[k] += delta[k];
    }
    x_t = std::move(next);
    out.z_seq.push_back(std::move(z));
    prev_denoised = std::move(denoised);
    prev_t = t;
  }
  return out;
}

EditFriendlyLatents invert(const Field& x0, const DenoiserModel& model,
                           const NoiseSchedule& schedule, const TimestepGrid& grid,
                           std::uint64_t seed, const Conditioning* inversion_conditioning) {
  require_same_shape(x0.shape(), model.input_shape(), "inversion input");
  EditFriendlyLatents latents;
  latents.x_seq = build_reconstruction_sequence(x0, schedule, grid, seed);
  NoiseMaps maps = extract_noise_maps(latents.x_seq, model, schedule, grid, inversion_conditioning);
  latents.z_seq = std::move(maps.z_seq);
  latents.residuals = std::move(maps.residuals);
  latents.seed = seed;
  latents.schedule_fingerprint = schedule.fingerprint();
  latents.model_fingerprint = model.fingerprint();
  latents.grid = grid;
  return latents;
}

Field reconstruct(const EditFriendlyLatents& latents, const DenoiserModel& model,
                  const NoiseSchedule& schedule, const Conditioning* inversion_conditioning) {
  StoredNoise noise(latents.z_seq, latents.residuals);
  return generate(model, schedule, latents.grid, {}, noise, latents.start_state(),
                  inversion_conditioning);
}

Field ddim_invert(const Field& x0, const DenoiserModel& model, const NoiseSchedule& schedule,
                  int steps) {
  const TimestepGrid grid = TimestepGrid::uniform(schedule.steps(), steps);
  Field x = x0;
  int current = 0;
  for (auto it = grid.steps.rbegin(); it != grid.steps.rend(); ++it) {
    const int t = *it;
    const Field eps = model.eps(x, t, nullptr).eps;
    const double a_cur = schedule.signal(current);
    const double s_cur = schedule.noise(current);
    const double a_t = schedule.signal(t);
    const double s_t = schedule.noise(t);
    Field next(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double clean = (static_cast<double>(x[i]) - s_cur * eps[i]) / a_cur;
      next[i] = static_cast<float>(a_t * clean + s_t * eps[i]);
    }
    x = std::move(next);
    current = t;
  }
  return x;
}

Field ddim_generate(const Field& x_T, const DenoiserModel& model, const NoiseSchedule& schedule,
                    int steps) {
  const TimestepGrid grid = TimestepGrid::uniform(schedule.steps(), steps);
  ZeroNoise noise;
  return generate_ancestral(model, schedule, grid, 0.0, noise, x_T);
}

namespace {

constexpr char kLatentMagic[] = "LPL1";

}  // namespace

void save_latents(const EditFriendlyLatents& latents, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.magic(kLatentMagic);
  w.raw(latents.schedule_fingerprint.data(), latents.schedule_fingerprint.size());
  w.raw(latents.model_fingerprint.data(), latents.model_fingerprint.size());
  w.u32(static_cast<std::uint32_t>(latents.grid.steps.size()));
  for (int s : latents.grid.steps) w.u32(static_cast<std::uint32_t>(s));
  w.f64(latents.grid.skip);
  w.u32(static_cast<std::uint32_t>(latents.grid.start_index));
  w.u64(latents.seed);
  w.u32(static_cast<std::uint32_t>(latents.x_seq.size()));
  for (const Field& f : latents.x_seq) w.field(f);
  w.u32(static_cast<std::uint32_t>(latents.z_seq.size()));
  for (const Field& f : latents.z_seq) w.field(f);
  w.u32(static_cast<std::uint32_t>(latents.residuals.size()));
  for (const StepResidual& r : latents.residuals) {
    w.u32(static_cast<std::uint32_t>(r.executed_step));
    w.field(r.delta);
  }
  io::write_file_atomic(path, w.bytes());
}

EditFriendlyLatents load_latents(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = io::read_file(path);
  io::ByteReader r(bytes.data(), bytes.size(), "latent cache " + path.string());
  r.expect_magic(kLatentMagic);
  EditFriendlyLatents out;
  r.raw(out.schedule_fingerprint.data(), out.schedule_fingerprint.size());
  r.raw(out.model_fingerprint.data(), out.model_fingerprint.size());
  const std::uint32_t n_steps = r.u32();
  if (n_steps == 0 || n_steps > r.remaining() / 4) throw FormatError("latent cache: bad grid size");
  std::vector<int> steps(n_steps);
  for (auto& s : steps) s = static_cast<int>(r.u32());
  const double skip = r.f64();
  const std::uint32_t start = r.u32();
  if (start >= n_steps) throw FormatError("latent cache: start index outside grid");
  TimestepGrid grid;
  grid.steps = std::move(steps);
  grid.skip = skip;
  grid.start_index = start;
  for (std::size_t i = 0; i < grid.steps.size(); ++i) {
    if (grid.steps[i] < 1 || (i > 0 && grid.steps[i] >= grid.steps[i - 1])) {
      throw FormatError("latent cache: grid is not strictly decreasing");
    }
  }
  out.grid = std::move(grid);
  out.seed = r.u64();

  const std::uint32_t n_x = r.u32();
  if (n_x != out.grid.size() + 1) throw FormatError("latent cache: x sequence length mismatch");
  for (std::uint32_t i = 0; i < n_x; ++i) out.x_seq.push_back(r.field());
  const std::uint32_t n_z = r.u32();
  if (n_z != out.grid.executed_count()) {
    throw FormatError("latent cache: noise map count mismatch");
  }
  for (std::uint32_t i = 0; i < n_z; ++i) out.z_seq.push_back(r.field());
  const std::uint32_t n_r = r.u32();
  if (n_r > n_z) throw FormatError("latent cache: more residuals than executed steps");
  for (std::uint32_t i = 0; i < n_r; ++i) {
    const std::uint32_t step = r.u32();
    if (step >= n_z || (i > 0 && step <= out.residuals.back().executed_step)) {
      throw FormatError("latent cache: residual step indices out of order");
    }
    out.residuals.push_back({step, r.field()});
  }
  r.expect_end();

  const Shape shape = out.x_seq.front().shape();
  auto check = [&](const Field& f) {
    if (!(f.shape() == shape)) throw FormatError("latent cache: inconsistent field shapes");
    if (!f.all_finite()) throw FormatError("latent cache: non-finite values");
  };
  for (const Field& f : out.x_seq) check(f);
  for (const Field& f : out.z_seq) check(f);
  for (const StepResidual& res : out.residuals) check(res.delta);
  return out;
}

void check_fresh(const EditFriendlyLatents& latents, const NoiseSchedule& schedule,
                 const DenoiserModel& model) {
  if (latents.schedule_fingerprint != schedule.fingerprint()) {
    throw StaleCacheError("latent cache was built with schedule " +
                          to_hex(latents.schedule_fingerprint) + ", current schedule is " +
                          to_hex(schedule.fingerprint()));
  }
  if (latents.model_fingerprint != model.fingerprint()) {
    throw StaleCacheError("latent cache was built with model " +
                          to_hex(latents.model_fingerprint) + ", current model is " +
                          to_hex(model.fingerprint()));
  }
  if (latents.grid.steps.front() > schedule.steps()) {
    throw StaleCacheError("latent cache grid exceeds the schedule length");
  }
}

EditFriendlyLatents load_latents_for(const std::filesystem::path& path,
                                     const NoiseSchedule& schedule, const DenoiserModel& model) {
  EditFriendlyLatents latents = load_latents(path);
  check_fresh(latents, schedule, model);
  return latents;
}

}  // namespace ledits
