#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "isoplane/engine.hpp"
#include "isoplane/error.hpp"
#include "isoplane/nets.hpp"
#include "isoplane/random.hpp"
#include "isoplane/tiling.hpp"
#include "isoplane/volume.hpp"

namespace isoplane::trainer {

using engine::Tensor;

// Per-plane single-image enhancer supplying the "real" slices and L1 targets.
// `index` is the slice position along the plane's axis of the prepared volume.
class PlaneTeacher {
 public:
  virtual ~PlaneTeacher() = default;
  virtual Image enhance(Plane plane, std::size_t index, const Image& input) const = 0;
  virtual std::string name() const = 0;
};

class IdentityTeacher final : public PlaneTeacher {
 public:
  Image enhance(Plane, std::size_t, const Image& input) const override { return input; }
  std::string name() const override { return "identity"; }
};

// Returns the ground-truth slice at the same position. The ground truth must
// already sit on the prepared grid; aligned() builds such a volume.
class OracleTeacher final : public PlaneTeacher {
 public:
  explicit OracleTeacher(Volume aligned_truth) : truth_(std::move(aligned_truth)) {}

  // Ground truth resampled onto the prepared grid; padding gets background.
  static OracleTeacher aligned(const Volume& truth, const Volume& grid) { return OracleTeacher(align_to(truth, grid)); }

  Image enhance(Plane plane, std::size_t index, const Image& input) const override {
    Image s = slice(truth_, plane, index);
    if (s.rows != input.rows || s.cols != input.cols)
      throw ShapeError("oracle teacher: ground truth slice " + std::to_string(s.rows) + "x" + std::to_string(s.cols) +
                       " does not match input " + std::to_string(input.rows) + "x" + std::to_string(input.cols));
    return s;
  }
  std::string name() const override { return "oracle"; }
  const Volume& truth() const { return truth_; }

 private:
  Volume truth_;
};

struct TrainConfig {
  long epochs = 100;
  std::size_t batch = 16;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  long scheduler_step = 40;
  double scheduler_gamma = 0.5;
  double alpha = 0.5;  // coronal plane weight
  double beta = 0.5;   // axial plane weight
  double lambda_cor = 10.0;
  double lambda_ax = 10.0;
  std::size_t patch = 64;
  double overlap = 0.08;
  std::size_t pad_cube = 512;  // centre volumes in a cube of this side; 0 pads only up to one patch
  std::size_t base_channels = 32;
  std::size_t depth = 4;
  double dropout = 0.5;
  bool residual = false;
  bool paper_discriminators = true;
  std::uint64_t seed = 0;
  std::size_t steps_per_epoch = 0;  // 0: sweep every window once per epoch
  long checkpoint_every = 10;       // epochs; 0 disables periodic checkpoints
  StitchWeighting stitch = StitchWeighting::Uniform;

  static TrainConfig paper() { return {}; }

  static TrainConfig desk() {
    TrainConfig c;
    c.epochs = 30;
    c.batch = 4;
    c.patch = 32;
    c.pad_cube = 0;
    c.base_channels = 8;
    c.paper_discriminators = false;
    c.residual = true;
    c.scheduler_step = 12;
    return c;
  }

  bool coronal_enabled() const { return alpha > 0.0; }
  bool axial_enabled() const { return beta > 0.0; }

  void validate() const {
    if (epochs <= 0 || batch == 0 || patch == 0 || base_channels == 0 || depth < 2)
      throw InvalidArgument("epochs, batch, patch, channels must be positive and depth >= 2");
    if (!(lr > 0) || scheduler_step <= 0 || !(scheduler_gamma > 0))
      throw InvalidArgument("learning rate and scheduler parameters must be positive");
    if (alpha < 0 || beta < 0 || !(alpha + beta > 0)) throw InvalidArgument("alpha, beta must be >= 0 with alpha + beta > 0");
    if (lambda_cor < 0 || lambda_ax < 0) throw InvalidArgument("lambda weights must be >= 0");
    if (patch % (std::size_t{1} << depth) != 0)
      throw InvalidArgument("patch size " + std::to_string(patch) + " not divisible by 2^depth");
    if (checkpoint_every < 0) throw InvalidArgument("checkpoint_every must be >= 0");
    if (pad_cube > 0 && pad_cube < patch) throw InvalidArgument("pad_cube must be 0 or at least one patch");
    if (!(overlap >= 0 && overlap < 1)) throw InvalidArgument("overlap fraction must lie in [0, 1)");
  }

  nets::GeneratorConfig generator() const {
    nets::GeneratorConfig g;
    g.base_channels = base_channels;
    g.depth = depth;
    g.dropout = dropout;
    g.residual = residual;
    g.seed = derive_seed(seed, 1);
    return g;
  }

  nets::DiscriminatorConfig discriminator(Plane p) const {
    auto d = p == Plane::Coronal ? nets::DiscriminatorConfig::coronal(paper_discriminators)
                                 : nets::DiscriminatorConfig::axial(paper_discriminators);
    d.seed = derive_seed(seed, 2);
    return d;
  }
};

// Interpolated isotropic volume, padded with background: centred in the
// configured cube, or at the far end of any axis shorter than one patch.
struct PreparedCase {
  Volume volume;
  Dims original_dims{};
  Dims offset{};  // position of the unpadded volume inside `volume`
  PatchGrid grid;
};

inline PreparedCase prepare_case(const Volume& anisotropic, const TrainConfig& cfg) {
  const double t = std::min({anisotropic.spacing()[0], anisotropic.spacing()[1], anisotropic.spacing()[2]});
  Volume iso = resample_isotropic(anisotropic, t);
  if (!iso.normalized()) iso = normalize_minmax(iso);
  PreparedCase pc;
  pc.original_dims = iso.dims();
  if (cfg.pad_cube > 0) {
    pc.offset = cube_padding(iso.dims(), cfg.pad_cube).before;
    pc.volume = pad_to_cube(iso, cfg.pad_cube);
  } else {
    Dims padded = iso.dims();
    for (auto& d : padded) d = std::max(d, cfg.patch);
    pc.volume = padded == iso.dims() ? std::move(iso) : pad(iso, padded, {0, 0, 0});
  }
  pc.grid = plan(pc.volume.dims(), cfg.patch, cfg.overlap);
  return pc;
}

// A prepared case with its teacher slices precomputed into per-plane volumes.
struct TrainingCase {
  std::string name;
  PreparedCase prepared;
  Volume teacher_cor;
  Volume teacher_ax;
};

inline Volume teacher_volume(const Volume& v, Plane plane, const PlaneTeacher& teacher) {
  Volume out(v.dims(), v.spacing(), v.origin());
  out.set_normalized(v.normalized());
  for (std::size_t k = 0; k < v.dim(axis_of(plane)); ++k) {
    const Image in = slice(v, plane, k);
    const Image en = teacher.enhance(plane, k, in);
    if (en.rows != in.rows || en.cols != in.cols) throw ShapeError("teacher changed the slice shape");
    set_slice(out, plane, k, en);
  }
  return out;
}

inline TrainingCase make_training_case(std::string name, PreparedCase prepared, const PlaneTeacher& teacher) {
  TrainingCase c;
  c.name = std::move(name);
  c.teacher_cor = teacher_volume(prepared.volume, Plane::Coronal, teacher);
  c.teacher_ax = teacher_volume(prepared.volume, Plane::Axial, teacher);
  c.prepared = std::move(prepared);
  return c;
}

struct LossRecord {
  double adv_G_cor = 0;
  double adv_G_ax = 0;
  double l1_cor = 0;
  double l1_ax = 0;
  double d_cor = 0;
  double d_ax = 0;

  static constexpr const char* kColumns = "adv_G_cor,adv_G_ax,l1_cor,l1_ax,d_cor,d_ax";
  std::array<double, 6> values() const { return {adv_G_cor, adv_G_ax, l1_cor, l1_ax, d_cor, d_ax}; }
};

// A discriminator with its optimizer and the plane's loss weights.
struct PlaneCritic {
  nets::Discriminator<float> net;
  engine::Adam<float> opt;
  double weight;
  double lambda;

  PlaneCritic(const nets::DiscriminatorConfig& cfg, const TrainConfig& tc, double w, double l)
      : net(cfg), opt(net.parameters(), tc.lr, tc.beta1, tc.beta2), weight(w), lambda(l) {}
};

struct Batch {
  Tensor<float> input;        // [B,1,P,P,P] interpolated patches
  Tensor<float> teacher_cor;  // coronal teacher patches
  Tensor<float> teacher_ax;   // axial teacher patches
};

inline void check_finite(double v, const char* what, long step) {
  if (!std::isfinite(v)) throw TrainingFault(std::string("non-finite ") + what, step);
}

// One adversarial step: both discriminators first (on detached generator
// output), then the generator on the weighted total of its per-plane
// adversarial and L1 terms. Missing critics (ablations) contribute nothing.
template <class Gen>
LossRecord training_step(const Batch& batch, Gen& gen, engine::Adam<float>& gen_opt, PlaneCritic* cor,
                         PlaneCritic* ax, Rng& dropout_rng, long step_index) {
  if (batch.input.shape() != batch.teacher_cor.shape() || batch.input.shape() != batch.teacher_ax.shape())
    throw ShapeError("training_step: teacher and input batches differ in shape");
  LossRecord rec;
  const Tensor<float> fake = gen.forward(batch.input, true, &dropout_rng);
  const Tensor<float> fake_d = fake.detach();

  auto critic_update = [&](PlaneCritic* c, Plane p, const Tensor<float>& teacher, double& out) {
    if (!c) return;
    const auto cond = nets::plane_slices(batch.input, p);
    const auto real = nets::plane_slices(teacher, p);
    const auto gen_slices = nets::plane_slices(fake_d, p);
    c->opt.zero_grad();
    const auto loss = nets::lsgan_discriminator_loss(c->net.forward(cond, real), c->net.forward(cond, gen_slices));
    out = loss.item();
    check_finite(out, "discriminator loss", step_index);
    loss.backward();
    c->opt.step();
  };
  critic_update(cor, Plane::Coronal, batch.teacher_cor, rec.d_cor);
  critic_update(ax, Plane::Axial, batch.teacher_ax, rec.d_ax);

  Tensor<float> terms[2][2];
  auto generator_terms = [&](PlaneCritic* c, Plane p, const Tensor<float>& teacher, double& adv, double& l1) {
    if (!c) return;
    const auto cond = nets::plane_slices(batch.input, p);
    const auto gen_slices = nets::plane_slices(fake, p);
    auto& slot = terms[axis_of(p)];
    slot[0] = nets::lsgan_generator_loss(c->net.forward(cond, gen_slices));
    slot[1] = nets::l1_consistency(gen_slices, nets::plane_slices(teacher, p), c->lambda);
    adv = slot[0].item();
    l1 = slot[1].item();
  };
  generator_terms(cor, Plane::Coronal, batch.teacher_cor, rec.adv_G_cor, rec.l1_cor);
  generator_terms(ax, Plane::Axial, batch.teacher_ax, rec.adv_G_ax, rec.l1_ax);
  const auto total = nets::total_generator_loss(terms[0][0], terms[0][1], terms[1][0], terms[1][1],
                                                cor ? cor->weight : 0.0, ax ? ax->weight : 0.0);
  check_finite(total.item(), "generator loss", step_index);
  gen_opt.zero_grad();
  total.backward();
  gen_opt.step();
  return rec;
}

// Generator, critics and optimizers of one training run.
struct Models {
  nets::Generator<float> gen;
  engine::Adam<float> gen_opt;
  std::unique_ptr<PlaneCritic> cor;
  std::unique_ptr<PlaneCritic> ax;

  explicit Models(const TrainConfig& cfg)
      : gen(cfg.generator()), gen_opt(gen.parameters(), cfg.lr, cfg.beta1, cfg.beta2) {
    if (cfg.coronal_enabled())
      cor = std::make_unique<PlaneCritic>(cfg.discriminator(Plane::Coronal), cfg, cfg.alpha, cfg.lambda_cor);
    if (cfg.axial_enabled())
      ax = std::make_unique<PlaneCritic>(cfg.discriminator(Plane::Axial), cfg, cfg.beta, cfg.lambda_ax);
  }

  void set_lr(double lr) {
    gen_opt.set_lr(lr);
    if (cor) cor->opt.set_lr(lr);
    if (ax) ax->opt.set_lr(lr);
  }
};

namespace detail {

inline void store_params(engine::Checkpoint& ck, const nets::NamedParams<float>& params) {
  for (const auto& [name, p] : params) ck.arrays.push_back(engine::to_named<float>(name, p.shape(), p.data()));
}

inline void load_params(const engine::Checkpoint& ck, const nets::NamedParams<float>& params) {
  for (const auto& [name, p] : params) {
    const auto* a = ck.find(name);
    if (!a) throw LoadError("checkpoint lacks parameter '" + name + "' (architecture mismatch)");
    if (a->shape != p.shape())
      throw LoadError("parameter '" + name + "' has shape " + engine::to_string(a->shape) + " in checkpoint, " +
                      engine::to_string(p.shape()) + " in model");
    auto dst = const_cast<Tensor<float>&>(p).data();
    std::copy(a->data.begin(), a->data.end(), dst.begin());
  }
}

inline void expect_meta(const engine::Checkpoint& ck, const std::string& key, const std::string& expected) {
  const auto it = ck.meta.find(key);
  if (it == ck.meta.end()) throw LoadError("checkpoint metadata '" + key + "' missing");
  if (it->second != expected)
    throw LoadError("checkpoint " + key + " is '" + it->second + "', configuration expects '" + expected + "'");
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace detail

inline engine::Checkpoint make_checkpoint(const Models& m, const TrainConfig& cfg, long epochs_done, long global_step) {
  engine::Checkpoint ck;
  ck.meta["generator"] = cfg.generator().describe();
  ck.meta["disc_coronal"] = m.cor ? m.cor->net.config().describe() : "none";
  ck.meta["disc_axial"] = m.ax ? m.ax->net.config().describe() : "none";
  ck.meta["epochs_done"] = std::to_string(epochs_done);
  ck.meta["global_step"] = std::to_string(global_step);
  ck.meta["seed"] = std::to_string(cfg.seed);
  ck.meta["patch"] = std::to_string(cfg.patch);
  detail::store_params(ck, m.gen.named_parameters());
  engine::store_optimizer(ck, "opt.gen", m.gen_opt);
  if (m.cor) {
    detail::store_params(ck, m.cor->net.named_parameters());
    engine::store_optimizer(ck, "opt.disc_coronal", m.cor->opt);
  }
  if (m.ax) {
    detail::store_params(ck, m.ax->net.named_parameters());
    engine::store_optimizer(ck, "opt.disc_axial", m.ax->opt);
  }
  return ck;
}

inline void restore_models(const engine::Checkpoint& ck, Models& m, const TrainConfig& cfg) {
  detail::expect_meta(ck, "generator", cfg.generator().describe());
  detail::expect_meta(ck, "disc_coronal", m.cor ? m.cor->net.config().describe() : "none");
  detail::expect_meta(ck, "disc_axial", m.ax ? m.ax->net.config().describe() : "none");
  detail::load_params(ck, m.gen.named_parameters());
  engine::load_optimizer(ck, "opt.gen", m.gen_opt);
  if (m.cor) {
    detail::load_params(ck, m.cor->net.named_parameters());
    engine::load_optimizer(ck, "opt.disc_coronal", m.cor->opt);
  }
  if (m.ax) {
    detail::load_params(ck, m.ax->net.named_parameters());
    engine::load_optimizer(ck, "opt.disc_axial", m.ax->opt);
  }
}

// Generator only, for inference.
inline nets::Generator<float> load_generator(const engine::Checkpoint& ck, const TrainConfig& cfg) {
  detail::expect_meta(ck, "generator", cfg.generator().describe());
  nets::Generator<float> g(cfg.generator());
  detail::load_params(ck, g.named_parameters());
  return g;
}

inline Tensor<float> stack_patches(const std::vector<const Volume*>& vols, const std::vector<Dims>& corners,
                                   std::size_t p) {
  auto t = Tensor<float>::zeros({vols.size(), 1, p, p, p});
  auto dst = t.data();
  const std::size_t len = p * p * p;
  for (std::size_t b = 0; b < vols.size(); ++b) {
    const Volume patch = crop(*vols[b], corners[b], {p, p, p});
    std::copy(patch.data().begin(), patch.data().end(), dst.begin() + static_cast<std::ptrdiff_t>(b * len));
  }
  return t;
}

struct HistoryRow {
  long epoch = 0;
  long step = 0;
  double lr = 0;
  LossRecord losses;
};

struct TrainResult {
  std::vector<HistoryRow> history;  // rows produced by this call
  std::filesystem::path checkpoint;
  long global_step = 0;
};

inline constexpr const char* kHistoryHeader = "epoch,step,lr,adv_G_cor,adv_G_ax,l1_cor,l1_ax,d_cor,d_ax";

inline std::string history_line(const HistoryRow& r) {
  std::string s = std::to_string(r.epoch) + "," + std::to_string(r.step) + "," + detail::fmt(r.lr);
  for (double v : r.losses.values()) s += "," + detail::fmt(v);
  return s;
}

struct TrainOptions {
  std::filesystem::path run_dir;
  std::optional<std::filesystem::path> resume;  // checkpoint to continue from
  std::function<void(const HistoryRow&)> on_step;
  std::map<std::string, std::string> checkpoint_meta;  // extra metadata stored in every checkpoint
};

// Epoch loop over seeded shuffles of (case, window) pairs. Writes
// history.csv, periodic checkpoint_epochN.ckpt files and model.ckpt.
inline TrainResult train(const std::vector<TrainingCase>& cases, const TrainConfig& cfg, const TrainOptions& opts) {
  if (cases.empty()) throw InvalidArgument("train: no training cases");
  cfg.validate();
  for (const auto& c : cases)
    if (c.prepared.grid.patch_size != cfg.patch) throw InvalidArgument("train: case " + c.name + " planned for another patch size");
  std::filesystem::create_directories(opts.run_dir);
  Models models(cfg);
  long start_epoch = 0, global_step = 0;
  if (opts.resume) {
    const auto ck = engine::read_checkpoint(*opts.resume);
    restore_models(ck, models, cfg);
    start_epoch = std::stol(ck.meta_value("epochs_done"));
    global_step = std::stol(ck.meta_value("global_step"));
  }

  std::vector<std::pair<std::size_t, std::size_t>> windows;
  for (std::size_t c = 0; c < cases.size(); ++c)
    for (std::size_t w = 0; w < cases[c].prepared.grid.patch_count(); ++w) windows.emplace_back(c, w);

  const auto history_path = opts.run_dir / "history.csv";
  const bool fresh = !opts.resume || !std::filesystem::exists(history_path);
  std::ofstream history(history_path, fresh ? std::ios::trunc : std::ios::app);
  if (fresh) history << kHistoryHeader << '\n';

  auto snapshot = [&](long epochs_done) {
    auto ck = make_checkpoint(models, cfg, epochs_done, global_step);
    for (const auto& [k, v] : opts.checkpoint_meta) ck.meta[k] = v;
    return ck;
  };
  engine::StepScheduler sched{cfg.lr, cfg.scheduler_step, cfg.scheduler_gamma};
  TrainResult result;
  const std::size_t p = cfg.patch;
  for (long epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const double lr = sched.lr(epoch);
    models.set_lr(lr);
    auto order = windows;
    Rng shuffle_rng(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order.begin(), order.end());
    const std::size_t steps =
        cfg.steps_per_epoch > 0 ? cfg.steps_per_epoch : (order.size() + cfg.batch - 1) / cfg.batch;
    for (std::size_t s = 0; s < steps; ++s) {
      std::vector<const Volume*> in, tc, ta;
      std::vector<Dims> corners;
      for (std::size_t b = 0; b < cfg.batch; ++b) {
        const std::size_t idx = s * cfg.batch + b;
        if (cfg.steps_per_epoch == 0 && idx >= order.size()) break;
        const auto [ci, wi] = order[idx % order.size()];
        in.push_back(&cases[ci].prepared.volume);
        tc.push_back(&cases[ci].teacher_cor);
        ta.push_back(&cases[ci].teacher_ax);
        corners.push_back(cases[ci].prepared.grid.window(wi));
      }
      Batch batch{stack_patches(in, corners, p), stack_patches(tc, corners, p), stack_patches(ta, corners, p)};
      Rng dropout_rng(derive_seed(cfg.seed, 0xd00d0000ULL + static_cast<std::uint64_t>(global_step)));
      HistoryRow row;
      row.epoch = epoch;
      row.step = global_step;
      row.lr = lr;
      row.losses = training_step(batch, models.gen, models.gen_opt, models.cor.get(), models.ax.get(), dropout_rng,
                                 global_step);
      ++global_step;
      history << history_line(row) << '\n';
      if (opts.on_step) opts.on_step(row);
      result.history.push_back(row);
    }
    history.flush();
    const long done = epoch + 1;
    if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done != cfg.epochs)
      engine::write_checkpoint(snapshot(done), opts.run_dir / ("checkpoint_epoch" + std::to_string(done) + ".ckpt"));
  }
  result.checkpoint = opts.run_dir / "model.ckpt";
  engine::write_checkpoint(snapshot(std::max(start_epoch, cfg.epochs)), result.checkpoint);
  result.global_step = global_step;
  return result;
}

// Patch-wise restoration of a prepared case; returns the stitched volume
// cropped to the pre-padding dims.
inline Volume restore(const nets::Generator<float>& gen, const PreparedCase& pc, const TrainConfig& cfg) {
  engine::NoGradGuard no_grad;
  const auto& grid = pc.grid;
  std::vector<Volume> outputs;
  outputs.reserve(grid.patch_count());
  const std::size_t p = grid.patch_size;
  for (std::size_t w = 0; w < grid.patch_count(); ++w) {
    const auto x = stack_patches({&pc.volume}, {grid.window(w)}, p);
    const auto y = gen.forward(x, false);
    Volume patch({p, p, p}, pc.volume.spacing());
    std::copy(y.values().begin(), y.values().end(), patch.data().begin());
    outputs.push_back(std::move(patch));
  }
  Volume full = stitch(outputs, grid, pc.volume.spacing(), pc.volume.origin(), cfg.stitch);
  Volume out = full.dims() == pc.original_dims ? std::move(full) : crop(full, pc.offset, pc.original_dims);
  out.set_normalized(true);
  return out;
}

inline Volume infer(const Volume& anisotropic, const engine::Checkpoint& ck, const TrainConfig& cfg) {
  const auto gen = load_generator(ck, cfg);
  return restore(gen, prepare_case(anisotropic, cfg), cfg);
}

}  // namespace isoplane::trainer
