#include "ledits/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include "json.hpp"
#include "ledits/binary_io.hpp"
#include "ledits/error.hpp"
#include "ledits/experiments.hpp"
#include "ledits/field_io.hpp"
#include "ledits/fingerprint.hpp"
#include "ledits/shapes.hpp"

namespace ledits {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw ParameterError("'" + where + "' must be a JSON object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ParameterError("unknown key '" + key + "' in '" + where + "'");
  }
}

template <class T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParameterError("'" + where + "." + key + "' has the wrong type");
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

Shape parse_shape(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ParameterError("'" + where + "' must be [C, H, W]");
  Shape s{j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
  if (s.channels <= 0 || s.height <= 0 || s.width <= 0 || s.size() > (1u << 24)) {
    throw ParameterError("'" + where + "' must have positive dimensions");
  }
  return s;
}

std::vector<int> int_list(const json& j, const std::string& where) {
  if (!j.is_array()) throw ParameterError("'" + where + "' must be an array of integers");
  std::vector<int> out;
  for (const auto& v : j) {
    if (!v.is_number_integer()) throw ParameterError("'" + where + "' must hold integers");
    out.push_back(v.get<int>());
  }
  return out;
}

GmmComponent parse_component(const json& j, const Shape& shape, const fs::path& base,
                             const std::string& where) {
  check_keys(j, where, {"mean", "mean_file", "boxes", "scale", "weight"});
  GmmComponent c;
  if (j.contains("mean_file")) {
    if (j.contains("mean")) throw ParameterError("'" + where + "' sets both mean and mean_file");
    c.mean = read_field_file(resolve(base, j.at("mean_file").get<std::string>()));
    require_same_shape(c.mean.shape(), shape, (where + ".mean_file").c_str());
  } else {
    c.mean = Field(shape, static_cast<float>(get_or(j, "mean", 0.0, where)));
  }
  if (j.contains("boxes")) {
    for (const auto& box : j.at("boxes")) {
      check_keys(box, where + ".boxes", {"y", "x", "h", "w", "value"});
      const int y = box.at("y"), x = box.at("x"), h = box.at("h"), w = box.at("w");
      const auto v = static_cast<float>(box.at("value").get<double>());
      if (y < 0 || x < 0 || h <= 0 || w <= 0 || y + h > shape.height || x + w > shape.width) {
        throw ParameterError("'" + where + ".boxes' entry lies outside the field");
      }
      for (int ch = 0; ch < shape.channels; ++ch) {
        for (int yy = y; yy < y + h; ++yy) {
          for (int xx = x; xx < x + w; ++xx) c.mean.at(ch, yy, xx) += v;
        }
      }
    }
  }
  c.scale = get_or(j, "scale", 1.0, where);
  c.weight = get_or(j, "weight", 1.0, where);
  return c;
}

ModelConfig parse_model(const json& j, const fs::path& base) {
  check_keys(j, "model", {"type", "shape", "components", "weights"});
  ModelConfig m;
  const std::string type = get_or<std::string>(j, "type", "gmm", "model");
  if (type == "gmm") {
    m.kind = ModelKind::gmm;
    if (!j.contains("shape")) throw ParameterError("'model.shape' is required for gmm models");
    const Shape shape = parse_shape(j.at("shape"), "model.shape");
    if (!j.contains("components") || !j.at("components").is_array()) {
      throw ParameterError("'model.components' must be a non-empty array");
    }
    std::size_t k = 0;
    for (const auto& c : j.at("components")) {
      m.gmm.components.push_back(
          parse_component(c, shape, base, "model.components[" + std::to_string(k++) + "]"));
    }
    m.gmm.validate();
  } else if (type == "tiny") {
    m.kind = ModelKind::tiny;
    if (j.contains("components")) throw ParameterError("'model.components' applies to gmm models");
    if (!j.contains("weights")) throw ParameterError("'model.weights' is required for tiny models");
    m.weights_path = resolve(base, j.at("weights").get<std::string>());
    m.weights = load_weights(m.weights_path);
    infer_architecture(m.weights);
    if (j.contains("shape")) m.shape = parse_shape(j.at("shape"), "model.shape");
  } else {
    throw ParameterError("'model.type' must be 'gmm' or 'tiny', got '" + type + "'");
  }
  return m;
}

InputConfig parse_input(const json& j, const fs::path& base) {
  check_keys(j, "input", {"file", "component", "shape_image", "index", "seed"});
  InputConfig in;
  const int kinds = j.contains("file") + j.contains("component") + j.contains("shape_image");
  if (kinds != 1) {
    throw ParameterError("'input' needs exactly one of file, component, shape_image");
  }
  in.index = get_or<std::uint32_t>(j, "index", 0, "input");
  in.seed = get_or<std::uint64_t>(j, "seed", 1, "input");
  if (j.contains("file")) {
    in.kind = InputKind::file;
    in.file = resolve(base, j.at("file").get<std::string>());
    if (!fs::exists(in.file)) throw ParameterError("input file '" + in.file.string() + "' not found");
  } else if (j.contains("component")) {
    in.kind = InputKind::component;
    in.component = j.at("component").get<std::size_t>();
  } else {
    in.kind = InputKind::shape_image;
    if (!j.at("shape_image").is_boolean() || !j.at("shape_image").get<bool>()) {
      throw ParameterError("'input.shape_image' must be true");
    }
  }
  return in;
}

/// Prepends the start token for the neural model and validates ids against its vocabulary.
Conditioning parse_conditioning(const json& j, const std::optional<ModelConfig>& model,
                                const std::string& where) {
  Conditioning c;
  c.label = get_or<std::string>(j, "label", where, where);
  const bool has_tokens = j.contains("tokens");
  const bool has_components = j.contains("components");
  if (!model) throw ParameterError("'" + where + "' needs a model section");
  if (model->kind == ModelKind::gmm) {
    if (has_tokens) throw ParameterError("'" + where + "': gmm models take 'components', not tokens");
    if (!has_components) throw ParameterError("'" + where + "' needs 'components'");
    c.concept_components = int_list(j.at("components"), where + ".components");
    if (c.concept_components.empty()) throw ParameterError("'" + where + "' has no components");
    for (int k : c.concept_components) {
      if (k < 0 || static_cast<std::size_t>(k) >= model->gmm.components.size()) {
        throw ParameterError("'" + where + "': component " + std::to_string(k) +
                             " outside the mixture");
      }
    }
  } else {
    if (has_components) throw ParameterError("'" + where + "': tiny models take 'tokens'");
    if (!has_tokens) throw ParameterError("'" + where + "' needs 'tokens'");
    const int vocab = infer_architecture(model->weights).vocab;
    c.token_ids = {TinyDenoiser::kStartToken};
    for (int id : int_list(j.at("tokens"), where + ".tokens")) {
      if (id <= 0 || id >= vocab) {
        throw ParameterError("'" + where + "': token " + std::to_string(id) +
                             " outside the model vocabulary 1.." + std::to_string(vocab - 1));
      }
      c.token_ids.push_back(id);
    }
  }
  return c;
}

EditInstruction parse_edit(const json& j, const std::optional<ModelConfig>& model,
                           const fs::path& base, std::size_t k) {
  const std::string where = "edits[" + std::to_string(k) + "]";
  check_keys(j, where,
             {"label", "tokens", "components", "direction", "scale", "threshold", "user_mask",
              "attention_tokens", "warmup_steps"});
  EditInstruction e;
  e.conditioning = parse_conditioning(j, model, where);
  e.label = e.conditioning.label;
  e.direction = parse_direction(get_or<std::string>(j, "direction", "positive", where));
  e.scale = get_or(j, "scale", 5.0, where);
  e.threshold = get_or(j, "threshold", 0.9, where);
  e.warmup_steps = get_or(j, "warmup_steps", 0, where);
  if (j.contains("attention_tokens")) {
    e.attention_tokens = int_list(j.at("attention_tokens"), where + ".attention_tokens");
    for (int p : e.attention_tokens) {
      if (p < 0 || static_cast<std::size_t>(p) >= e.conditioning.token_ids.size()) {
        throw ParameterError("'" + where + "': attention token position out of range");
      }
    }
  } else if (!e.conditioning.token_ids.empty()) {
    for (std::size_t p = 1; p < e.conditioning.token_ids.size(); ++p) {
      e.attention_tokens.push_back(static_cast<int>(p));
    }
  }
  if (j.contains("user_mask")) {
    e.user_mask = read_mask_pgm(resolve(base, j.at("user_mask").get<std::string>()));
  }
  return e;
}

std::string canonical_hash(const json& doc, const ConfigOverrides& o) {
  Fingerprinter fp;
  fp.text("ledits.config.v1").text(doc.dump());
  fp.u32(o.seed.has_value()).u64(o.seed.value_or(0));
  return to_hex(fp.finish()).substr(0, 16);
}

}  // namespace

RunConfig parse_config(const std::string& json_text, const fs::path& base_dir,
                       const ConfigOverrides& overrides) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParameterError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(doc, "config",
             {"schedule", "grid", "model", "input", "inversion", "edits", "output", "experiments",
              "training"});
  RunConfig cfg;
  try {
    if (doc.contains("schedule")) {
      const json& s = doc.at("schedule");
      check_keys(s, "schedule", {"kind", "T", "beta_min", "beta_max"});
      cfg.schedule_kind = parse_schedule_kind(get_or<std::string>(s, "kind", "linear", "schedule"));
      cfg.T = get_or(s, "T", cfg.T, "schedule");
      cfg.beta_min = get_or(s, "beta_min", cfg.beta_min, "schedule");
      cfg.beta_max = get_or(s, "beta_max", cfg.beta_max, "schedule");
    }
    if (doc.contains("grid")) {
      const json& g = doc.at("grid");
      check_keys(g, "grid", {"steps", "skip"});
      cfg.grid_steps = get_or(g, "steps", cfg.grid_steps, "grid");
      cfg.skip = get_or(g, "skip", cfg.skip, "grid");
    }
    if (doc.contains("model")) cfg.model = parse_model(doc.at("model"), base_dir);
    if (doc.contains("input")) cfg.input = parse_input(doc.at("input"), base_dir);
    if (doc.contains("inversion")) {
      const json& inv = doc.at("inversion");
      check_keys(inv, "inversion", {"seed", "conditioning"});
      cfg.inversion_seed = get_or<std::uint64_t>(inv, "seed", cfg.inversion_seed, "inversion");
      if (inv.contains("conditioning")) {
        const json& c = inv.at("conditioning");
        check_keys(c, "inversion.conditioning", {"label", "tokens", "components"});
        cfg.inversion_conditioning = parse_conditioning(c, cfg.model, "inversion.conditioning");
      }
    }
    if (doc.contains("edits")) {
      if (!doc.at("edits").is_array()) throw ParameterError("'edits' must be an array");
      std::size_t k = 0;
      for (const auto& e : doc.at("edits")) cfg.edits.push_back(parse_edit(e, cfg.model, base_dir, k++));
    }
    if (doc.contains("output")) cfg.output = resolve(base_dir, doc.at("output").get<std::string>());
    if (doc.contains("experiments")) {
      const json& x = doc.at("experiments");
      check_keys(x, "experiments",
                 {"variation_seeds", "scales", "sweep_tolerance", "convergence", "mask_eval", "bench"});
      cfg.variation_seeds = get_or(x, "variation_seeds", cfg.variation_seeds, "experiments");
      cfg.scales = get_or(x, "scales", cfg.scales, "experiments");
      cfg.sweep_tolerance = get_or(x, "sweep_tolerance", cfg.sweep_tolerance, "experiments");
      if (x.contains("convergence")) {
        const json& c = x.at("convergence");
        check_keys(c, "experiments.convergence", {"mu", "s", "x_T", "steps"});
        auto& cc = cfg.convergence;
        cc.mu = get_or(c, "mu", cc.mu, "experiments.convergence");
        cc.s = get_or(c, "s", cc.s, "experiments.convergence");
        cc.x_T = get_or(c, "x_T", cc.x_T, "experiments.convergence");
        cc.steps = get_or(c, "steps", cc.steps, "experiments.convergence");
      }
      if (x.contains("mask_eval")) {
        const json& m = x.at("mask_eval");
        check_keys(m, "experiments.mask_eval", {"images", "dataset_seed", "t_low", "t_high"});
        auto& me = cfg.mask_eval;
        me.images = get_or(m, "images", me.images, "experiments.mask_eval");
        me.dataset_seed = get_or(m, "dataset_seed", me.dataset_seed, "experiments.mask_eval");
        me.t_low = get_or(m, "t_low", me.t_low, "experiments.mask_eval");
        me.t_high = get_or(m, "t_high", me.t_high, "experiments.mask_eval");
      }
      if (x.contains("bench")) {
        const json& b = x.at("bench");
        check_keys(b, "experiments.bench", {"steps", "skip"});
        auto& bc = cfg.bench;
        bc.steps = get_or(b, "steps", bc.steps, "experiments.bench");
        bc.skip = get_or(b, "skip", bc.skip, "experiments.bench");
      }
    }
    if (doc.contains("training")) {
      const json& t = doc.at("training");
      check_keys(t, "training",
                 {"enc1", "enc2", "enc3", "attn_dim", "heads", "vocab", "embed_dim", "steps",
                  "batch", "learning_rate", "final_learning_rate", "grad_clip", "caption_dropout",
                  "token_dropout", "seed", "init_seed", "dataset_seed", "shape"});
      auto& tc = cfg.training;
      auto& a = tc.architecture;
      a.enc1 = get_or(t, "enc1", a.enc1, "training");
      a.enc2 = get_or(t, "enc2", a.enc2, "training");
      a.enc3 = get_or(t, "enc3", a.enc3, "training");
      a.attn_dim = get_or(t, "attn_dim", a.attn_dim, "training");
      a.heads = get_or(t, "heads", a.heads, "training");
      a.vocab = get_or(t, "vocab", a.vocab, "training");
      a.embed_dim = get_or(t, "embed_dim", a.embed_dim, "training");
      auto& o = tc.options;
      o.steps = get_or(t, "steps", o.steps, "training");
      o.batch = get_or(t, "batch", o.batch, "training");
      o.learning_rate = get_or(t, "learning_rate", o.learning_rate, "training");
      o.final_learning_rate = get_or(t, "final_learning_rate", o.final_learning_rate, "training");
      o.grad_clip = get_or(t, "grad_clip", o.grad_clip, "training");
      o.caption_dropout = get_or(t, "caption_dropout", o.caption_dropout, "training");
      o.token_dropout = get_or(t, "token_dropout", o.token_dropout, "training");
      o.seed = get_or(t, "seed", o.seed, "training");
      tc.init_seed = get_or(t, "init_seed", tc.init_seed, "training");
      tc.dataset_seed = get_or(t, "dataset_seed", tc.dataset_seed, "training");
      if (t.contains("shape")) tc.shape = parse_shape(t.at("shape"), "training.shape");
      if (a.vocab <= kShapeTypes) throw ParameterError("'training.vocab' must exceed the shape types");
    }
  } catch (const json::exception& e) {
    throw ParameterError(std::string("config has a value of the wrong type: ") + e.what());
  }

  if (overrides.output) cfg.output = *overrides.output;
  if (overrides.seed) cfg.inversion_seed = *overrides.seed;
  cfg.dump_masks = overrides.dump_masks;

  // Everything below mirrors module preconditions so no command starts on a bad config.
  const NoiseSchedule schedule = build_schedule(cfg);
  build_grid(cfg);
  const Shape shape = cfg.model ? (cfg.model->kind == ModelKind::gmm ? cfg.model->gmm.shape()
                                                                     : cfg.model->shape)
                                : Shape{};
  if (cfg.model && cfg.model->kind == ModelKind::tiny) {
    TinyDenoiser probe(cfg.model->weights, schedule, shape);
  }
  for (const auto& e : cfg.edits) e.validate(shape);
  if (cfg.input && cfg.input->kind == InputKind::component && cfg.model &&
      (cfg.model->kind != ModelKind::gmm || cfg.input->component >= cfg.model->gmm.components.size())) {
    throw ParameterError("'input.component' needs a gmm model with that component");
  }
  if (cfg.sweep_tolerance < 0.0) throw ParameterError("'experiments.sweep_tolerance' must be >= 0");
  for (int n : cfg.convergence.steps) {
    if (n < 2 || n > cfg.T) throw ParameterError("convergence step counts must lie in [2, T]");
  }
  if (!(cfg.convergence.s > 0.0)) throw ParameterError("'experiments.convergence.s' must be > 0");
  if (cfg.mask_eval.images <= 0) throw ParameterError("'experiments.mask_eval.images' must be > 0");
  build_grid(cfg, cfg.bench.steps, cfg.bench.skip);
  cfg.hash = canonical_hash(doc, overrides);
  return cfg;
}

RunConfig load_config(const fs::path& path, const ConfigOverrides& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParameterError("cannot read config '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.parent_path(), overrides);
}

NoiseSchedule build_schedule(const RunConfig& config) {
  return NoiseSchedule::build(config.schedule_kind, config.T, config.beta_min, config.beta_max);
}

TimestepGrid build_grid(const RunConfig& config) {
  return build_grid(config, config.grid_steps, config.skip);
}

TimestepGrid build_grid(const RunConfig& config, int steps, double skip) {
  return TimestepGrid::uniform(config.T, steps, skip);
}

std::unique_ptr<DenoiserModel> build_model(const RunConfig& config, const NoiseSchedule& schedule) {
  if (!config.model) throw ParameterError("config has no 'model' section");
  if (config.model->kind == ModelKind::gmm) {
    return std::make_unique<GmmDenoiser>(config.model->gmm, schedule);
  }
  return std::make_unique<TinyDenoiser>(config.model->weights, schedule, config.model->shape);
}

Field load_input(const RunConfig& config, const DenoiserModel& model) {
  if (!config.input) throw ParameterError("config has no 'input' section");
  const InputConfig& in = *config.input;
  Field x0;
  switch (in.kind) {
    case InputKind::file:
      x0 = read_field_file(in.file);
      break;
    case InputKind::component:
      x0 = sample_component(config.model->gmm, in.component, in.seed, in.index);
      break;
    case InputKind::shape_image: {
      const Shape s = model.input_shape();
      x0 = make_shape_image(in.seed, in.index, s.height, s.width).x0;
      break;
    }
  }
  require_same_shape(x0.shape(), model.input_shape(), "input");
  if (!x0.all_finite()) throw ParameterError("input field has non-finite values");
  return x0;
}

}  // namespace ledits
