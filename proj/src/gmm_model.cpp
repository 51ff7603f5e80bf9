#include "ledits/gmm_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ledits/error.hpp"

namespace ledits {

void GmmSpec::validate() const {
  if (components.empty()) throw ParameterError("mixture needs at least one component");
  const Shape s = components.front().mean.shape();
  double total = 0.0;
  for (const auto& c : components) {
    require_same_shape(c.mean.shape(), s, "mixture component mean");
    if (!(c.scale > 0.0) || !std::isfinite(c.scale)) {
      throw ParameterError("mixture component scale must be positive");
    }
    if (!(c.weight > 0.0) || !std::isfinite(c.weight)) {
      throw ParameterError("mixture component weight must be positive");
    }
    if (!c.mean.all_finite()) throw ParameterError("mixture component mean is not finite");
    total += c.weight;
  }
  if (std::fabs(total - 1.0) > 1e-6) {
    throw ParameterError("mixture weights must sum to 1, got " + std::to_string(total));
  }
}

Shape GmmSpec::shape() const {
  if (components.empty()) throw ParameterError("mixture needs at least one component");
  return components.front().mean.shape();
}

Digest GmmSpec::fingerprint() const {
  Fingerprinter fp;
  fp.text("ledits.gmm.v1").u64(components.size());
  for (const auto& c : components) {
    const Shape s = c.mean.shape();
    fp.u32(s.channels).u32(s.height).u32(s.width);
    fp.floats(c.mean.data()).f64(c.scale).f64(c.weight);
  }
  return fp.finish();
}

namespace {

std::vector<int> resolve_subset(const GmmSpec& spec, const Conditioning* cond) {
  std::vector<int> subset;
  if (cond == nullptr) {
    subset.resize(spec.components.size());
    std::iota(subset.begin(), subset.end(), 0);
    return subset;
  }
  if (cond->concept_components.empty()) {
    throw ParameterError("conditioning '" + cond->label + "' selects no mixture component");
  }
  subset = cond->concept_components;
  std::sort(subset.begin(), subset.end());
  subset.erase(std::unique(subset.begin(), subset.end()), subset.end());
  for (int k : subset) {
    if (k < 0 || static_cast<std::size_t>(k) >= spec.components.size()) {
      throw ParameterError("mixture component index " + std::to_string(k) + " out of range");
    }
  }
  return subset;
}

}  // namespace

std::vector<double> gmm_responsibilities(const GmmSpec& spec, const NoiseSchedule& schedule,
                                         const Field& x, int t, const std::vector<int>& subset) {
  const double a = schedule.signal(t);
  const double var_noise = 1.0 - schedule.alpha_bar(t);
  const double dim = static_cast<double>(x.size());
  std::vector<double> logp(subset.size());
  for (std::size_t j = 0; j < subset.size(); ++j) {
    const auto& c = spec.components[subset[j]];
    const double v = a * a * c.scale * c.scale + var_noise;
    double dist = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = static_cast<double>(x[i]) - a * c.mean[i];
      dist += d * d;
    }
    logp[j] = std::log(c.weight) - 0.5 * dim * std::log(v) - 0.5 * dist / v;
  }
  const double peak = *std::max_element(logp.begin(), logp.end());
  double total = 0.0;
  for (double& l : logp) {
    l = std::exp(l - peak);
    total += l;
  }
  for (double& l : logp) l /= total;
  return logp;
}

Field eps_analytic_gmm(const GmmSpec& spec, const NoiseSchedule& schedule, const Field& x, int t,
                       const Conditioning* cond) {
  if (t < 1 || t > schedule.steps()) {
    throw ParameterError("analytic model timestep " + std::to_string(t) + " outside [1, T]");
  }
  require_same_shape(x.shape(), spec.shape(), "analytic model input");
  const std::vector<int> subset = resolve_subset(spec, cond);
  const std::vector<double> resp = gmm_responsibilities(spec, schedule, x, t, subset);

  const double a = schedule.signal(t);
  const double sigma = schedule.noise(t);
  const double var_noise = 1.0 - schedule.alpha_bar(t);

  std::vector<double> posterior(x.size(), 0.0);
  for (std::size_t j = 0; j < subset.size(); ++j) {
    if (resp[j] == 0.0) continue;
    const auto& c = spec.components[subset[j]];
    const double s2 = c.scale * c.scale;
    const double gain = a * s2 / (a * a * s2 + var_noise);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double mu = c.mean[i];
      posterior[i] += resp[j] * (mu + gain * (static_cast<double>(x[i]) - a * mu));
    }
  }
  Field out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = static_cast<float>((static_cast<double>(x[i]) - a * posterior[i]) / sigma);
  }
  return out;
}

GmmDenoiser::GmmDenoiser(GmmSpec spec, NoiseSchedule schedule)
    : spec_(std::move(spec)), schedule_(std::move(schedule)) {
  spec_.validate();
  Fingerprinter fp;
  fp.text("ledits.model.gmm.v1");
  const Digest spec_fp = spec_.fingerprint();
  fp.bytes(spec_fp).bytes(schedule_.fingerprint());
  fingerprint_ = fp.finish();
}

EpsOutput GmmDenoiser::eps(const Field& x, int t, const Conditioning* cond) const {
  return {eps_analytic_gmm(spec_, schedule_, x, t, cond), std::nullopt};
}

}  // namespace ledits
