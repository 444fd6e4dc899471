#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "isoplane/error.hpp"
#include "isoplane/metrics.hpp"
#include "isoplane/phantom.hpp"
#include "isoplane/trainer.hpp"
#include "isoplane/volume_io.hpp"

namespace isoplane {

struct PhantomConfig {
  std::size_t cases = 3;
  double fov = 96.0;
  double in_plane = 1.0;
  double slice_spacing = 5.0;
  double slice_thickness = 5.0;
  Vec3 axial_shift{0, 0, 0};
  double noise_sigma = 0.0;
  std::size_t quadrature = 16;

  std::pair<phantom::AcquisitionSpec, phantom::AcquisitionSpec> specs() const {
    auto [cor, ax] = phantom::default_specs(fov, in_plane, slice_spacing, axial_shift);
    for (auto* s : {&cor, &ax}) {
      s->slice_thickness = slice_thickness;
      s->noise_sigma = noise_sigma;
      s->quadrature = quadrature;
    }
    return {cor, ax};
  }
};

struct RunConfig {
  std::string profile = "desk";
  std::uint64_t seed = 0;
  std::string teacher = "oracle";  // oracle | identity
  std::size_t holdout = 0;         // cases excluded from training and evaluated; 0 evaluates the training cases
  trainer::TrainConfig train = trainer::TrainConfig::desk();
  PhantomConfig phantom;
  metrics::MetricConfig metric = metrics::MetricConfig::desk();
  std::uint64_t extractor_seed = 20240601;

  static RunConfig desk() { return {}; }

  static RunConfig paper() {
    RunConfig c;
    c.profile = "paper";
    c.train = trainer::TrainConfig::paper();
    c.metric = metrics::MetricConfig::paper();
    c.phantom.in_plane = 0.75;
    return c;
  }

  static RunConfig for_profile(const std::string& name) {
    if (name == "desk") return desk();
    if (name == "paper") return paper();
    throw InvalidArgument("unknown profile '" + name + "' (expected desk or paper)");
  }

  // Propagates the run seed to the stages.
  void sync_seed() { train.seed = seed; }

  void validate() const {
    train.validate();
    if (teacher != "oracle" && teacher != "identity") throw InvalidArgument("teacher must be oracle or identity");
    if (phantom.cases == 0) throw InvalidArgument("phantom cases must be >= 1");
    if (holdout >= phantom.cases && holdout > 0) throw InvalidArgument("holdout must leave at least one training case");
    if (metric.tile == 0 || metric.tile_stride == 0) throw InvalidArgument("metric tile and stride must be positive");
  }
};

namespace config_detail {

struct Field {
  std::string key;
  std::string help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || !std::isfinite(x)) throw InvalidArgument("config key '" + key + "': '" + v + "' is not a number");
  return x;
}

inline long long parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size()) throw InvalidArgument("config key '" + key + "': '" + v + "' is not an integer");
  return x;
}

inline std::size_t parse_count(const std::string& key, const std::string& v) {
  const auto x = parse_int(key, v);
  if (x < 0) throw InvalidArgument("config key '" + key + "' must be >= 0");
  return static_cast<std::size_t>(x);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InvalidArgument("config key '" + key + "': '" + v + "' is not a boolean");
}

inline std::string num(double x) { return detail::exact(x); }

template <class M>
Field real(std::string key, std::string help, M member) {
  return {key, std::move(help), [member](const RunConfig& c) { return num(member(const_cast<RunConfig&>(c))); },
          [member, key](RunConfig& c, const std::string& v) { member(c) = parse_double(key, v); }};
}

template <class M>
Field count(std::string key, std::string help, M member) {
  return {key, std::move(help), [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); },
          [member, key](RunConfig& c, const std::string& v) {
            using T = std::remove_reference_t<decltype(member(c))>;
            member(c) = static_cast<T>(parse_count(key, v));
          }};
}

template <class M>
Field flag(std::string key, std::string help, M member) {
  return {key, std::move(help), [member](const RunConfig& c) { return member(const_cast<RunConfig&>(c)) ? "true" : "false"; },
          [member, key](RunConfig& c, const std::string& v) { member(c) = parse_bool(key, v); }};
}

}  // namespace config_detail

// Every configurable key, in the order used for snapshots.
inline const std::vector<config_detail::Field>& config_fields() {
  using namespace config_detail;
  static const std::vector<Field> fields = {
      {"profile", "desk or paper; selects defaults for every other key", [](const RunConfig& c) { return c.profile; },
       [](RunConfig& c, const std::string& v) { c.profile = v; }},
      count("seed", "run seed (ISOPLANE_SEED overrides)", [](RunConfig& c) -> std::uint64_t& { return c.seed; }),
      {"teacher", "oracle (ground truth) or identity", [](const RunConfig& c) { return c.teacher; },
       [](RunConfig& c, const std::string& v) { c.teacher = v; }},
      count("holdout", "cases held out of training for evaluation", [](RunConfig& c) -> std::size_t& { return c.holdout; }),
      count("epochs", "training epochs", [](RunConfig& c) -> long& { return c.train.epochs; }),
      count("batch", "patches per step", [](RunConfig& c) -> std::size_t& { return c.train.batch; }),
      real("lr", "Adam learning rate", [](RunConfig& c) -> double& { return c.train.lr; }),
      real("beta1", "Adam beta1", [](RunConfig& c) -> double& { return c.train.beta1; }),
      real("beta2", "Adam beta2", [](RunConfig& c) -> double& { return c.train.beta2; }),
      count("scheduler_step", "epochs between learning-rate decays", [](RunConfig& c) -> long& { return c.train.scheduler_step; }),
      real("scheduler_gamma", "learning-rate decay factor", [](RunConfig& c) -> double& { return c.train.scheduler_gamma; }),
      real("alpha", "coronal loss weight (0 removes the coronal discriminator)", [](RunConfig& c) -> double& { return c.train.alpha; }),
      real("beta", "axial loss weight (0 removes the axial discriminator)", [](RunConfig& c) -> double& { return c.train.beta; }),
      real("lambda_cor", "coronal L1 weight", [](RunConfig& c) -> double& { return c.train.lambda_cor; }),
      real("lambda_ax", "axial L1 weight", [](RunConfig& c) -> double& { return c.train.lambda_ax; }),
      count("patch", "cubic patch side (voxels)", [](RunConfig& c) -> std::size_t& { return c.train.patch; }),
      real("overlap", "patch overlap fraction", [](RunConfig& c) -> double& { return c.train.overlap; }),
      count("pad_cube", "cube side volumes are centred in (0: pad up to one patch)", [](RunConfig& c) -> std::size_t& { return c.train.pad_cube; }),
      count("base_channels", "generator base channels C", [](RunConfig& c) -> std::size_t& { return c.train.base_channels; }),
      count("depth", "generator encoder levels", [](RunConfig& c) -> std::size_t& { return c.train.depth; }),
      real("dropout", "generator decoder dropout", [](RunConfig& c) -> double& { return c.train.dropout; }),
      flag("residual", "generator adds its output to the input volume", [](RunConfig& c) -> bool& { return c.train.residual; }),
      flag("paper_discriminators", "full-size discriminators", [](RunConfig& c) -> bool& { return c.train.paper_discriminators; }),
      count("steps_per_epoch", "steps per epoch (0: one sweep over all windows)", [](RunConfig& c) -> std::size_t& { return c.train.steps_per_epoch; }),
      count("checkpoint_every", "epochs between checkpoints (0: final only)", [](RunConfig& c) -> long& { return c.train.checkpoint_every; }),
      {"stitch", "patch blending: uniform or cosine",
       [](const RunConfig& c) { return std::string(c.train.stitch == StitchWeighting::Cosine ? "cosine" : "uniform"); },
       [](RunConfig& c, const std::string& v) {
         if (v != "uniform" && v != "cosine") throw InvalidArgument("stitch must be uniform or cosine");
         c.train.stitch = v == "cosine" ? StitchWeighting::Cosine : StitchWeighting::Uniform;
       }},
      count("cases", "phantom cases", [](RunConfig& c) -> std::size_t& { return c.phantom.cases; }),
      real("fov", "phantom field of view (mm)", [](RunConfig& c) -> double& { return c.phantom.fov; }),
      real("in_plane", "in-plane spacing (mm)", [](RunConfig& c) -> double& { return c.phantom.in_plane; }),
      real("slice_spacing", "through-plane spacing (mm)", [](RunConfig& c) -> double& { return c.phantom.slice_spacing; }),
      real("slice_thickness", "slab thickness (mm)", [](RunConfig& c) -> double& { return c.phantom.slice_thickness; }),
      real("noise_sigma", "acquisition noise standard deviation", [](RunConfig& c) -> double& { return c.phantom.noise_sigma; }),
      count("quadrature", "samples across each slab", [](RunConfig& c) -> std::size_t& { return c.phantom.quadrature; }),
      {"axial_shift", "rigid shift of the axial series, 'x y z' mm",
       [](const RunConfig& c) {
         return config_detail::num(c.phantom.axial_shift[0]) + " " + config_detail::num(c.phantom.axial_shift[1]) + " " +
                config_detail::num(c.phantom.axial_shift[2]);
       },
       [](RunConfig& c, const std::string& v) {
         std::istringstream is(v);
         Vec3 s{};
         for (auto& x : s)
           if (!(is >> x)) throw InvalidArgument("axial_shift needs three numbers");
         c.phantom.axial_shift = s;
       }},
      count("tile", "metric tile side (px)", [](RunConfig& c) -> std::size_t& { return c.metric.tile; }),
      count("tile_stride", "metric tile stride (px)", [](RunConfig& c) -> std::size_t& { return c.metric.tile_stride; }),
      count("extractor_seed", "feature extractor seed", [](RunConfig& c) -> std::uint64_t& { return c.extractor_seed; }),
  };
  return fields;
}

using KeyValues = std::vector<std::pair<std::string, std::string>>;

inline KeyValues parse_key_values(std::istream& in, const std::string& source) {
  KeyValues kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidArgument(source + " line " + std::to_string(lineno) + ": expected key = value");
    kv.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return kv;
}

inline KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config file " + path.string());
  return parse_key_values(in, path.string());
}

inline void apply(RunConfig& c, const std::string& key, const std::string& value) {
  for (const auto& f : config_fields())
    if (f.key == key) {
      f.set(c, value);
      return;
    }
  throw InvalidArgument("unknown config key '" + key + "'");
}

// Profile defaults, then the file's keys, then overrides; a `profile` key in
// either layer selects the defaults first. ISOPLANE_SEED, when set, replaces
// the seed from every layer.
inline RunConfig resolve_config(const KeyValues& file, const KeyValues& overrides, const std::string& profile = "") {
  std::string prof = profile.empty() ? "desk" : profile;
  for (const auto* layer : {&file, &overrides})
    for (const auto& [k, v] : *layer)
      if (k == "profile") prof = v;
  RunConfig c = RunConfig::for_profile(prof);
  for (const auto* layer : {&file, &overrides})
    for (const auto& [k, v] : *layer)
      if (k != "profile") apply(c, k, v);
  if (const char* env = std::getenv("ISOPLANE_SEED"); env && *env)
    c.seed = config_detail::parse_count("ISOPLANE_SEED", env);
  c.sync_seed();
  c.validate();
  return c;
}

inline KeyValues snapshot(const RunConfig& c) {
  KeyValues kv;
  for (const auto& f : config_fields()) kv.emplace_back(f.key, f.get(c));
  return kv;
}

inline std::string to_text(const KeyValues& kv) {
  std::string s;
  for (const auto& [k, v] : kv) s += k + " = " + v + "\n";
  return s;
}

// Rebuilds a snapshot exactly (no environment overrides).
inline RunConfig from_text(const std::string& text) {
  std::istringstream in(text);
  const auto kv = parse_key_values(in, "embedded config");
  std::string prof = "desk";
  for (const auto& [k, v] : kv)
    if (k == "profile") prof = v;
  RunConfig c = RunConfig::for_profile(prof);
  for (const auto& [k, v] : kv)
    if (k != "profile") apply(c, k, v);
  c.sync_seed();
  return c;
}

}  // namespace isoplane
