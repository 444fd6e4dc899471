#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "isoplane/analysis.hpp"
#include "isoplane/config.hpp"
#include "isoplane/manifest.hpp"
#include "isoplane/metrics.hpp"
#include "isoplane/phantom.hpp"
#include "isoplane/trainer.hpp"
#include "isoplane/volume_io.hpp"

namespace isoplane::pipeline {

namespace fs = std::filesystem;

// Failure inside a named pipeline stage.
struct StageError : Error {
  StageError(std::string stage_name, const std::string& what)
      : Error("stage '" + stage_name + "' failed: " + what), stage(std::move(stage_name)) {}
  std::string stage;
};

template <class Fn>
auto stage(const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

struct CaseFiles {
  std::string name;
  fs::path dir;
  fs::path gt() const { return dir / "gt.vol"; }
  fs::path cor() const { return dir / "cor.vol"; }
  fs::path ax() const { return dir / "ax.vol"; }
  fs::path centerline() const { return dir / "centerline.txt"; }
  bool has_gt() const { return fs::exists(gt()); }
};

inline void require_dir(const fs::path& p) {
  if (!fs::is_directory(p)) throw InvalidArgument("input directory does not exist: " + p.string());
}

// Case directories below `data_dir` holding at least cor.vol and ax.vol, sorted by name.
inline std::vector<CaseFiles> list_cases(const fs::path& data_dir) {
  require_dir(data_dir);
  std::vector<CaseFiles> out;
  for (const auto& e : fs::directory_iterator(data_dir)) {
    if (!e.is_directory()) continue;
    CaseFiles c{e.path().filename().string(), e.path()};
    if (fs::exists(c.cor()) && fs::exists(c.ax())) out.push_back(c);
  }
  std::sort(out.begin(), out.end(), [](const CaseFiles& a, const CaseFiles& b) { return a.name < b.name; });
  if (out.empty()) throw InvalidArgument("no cases (subdirectories with cor.vol and ax.vol) in " + data_dir.string());
  return out;
}

inline std::string case_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "case_%03zu", i);
  return buf;
}

inline std::uint64_t case_seed(std::uint64_t run_seed, std::size_t i) { return derive_seed(run_seed, 0xca5e0000ULL + i); }

// The main tube's axis, shortened where needed to stay 1 mm inside the field
// of view, as a two-point centerline.
inline std::vector<Vec3> tube_centerline(const phantom::Scene& s, double fov) {
  const auto& t = phantom::main_tube(s);
  std::vector<Vec3> pts;
  for (double sign : {-1.0, 1.0}) {
    double reach = t.radii[1];
    for (std::size_t a = 0; a < 3; ++a) {
      const double d = sign * t.axis[a];
      if (d > 1e-12) reach = std::min(reach, (fov - 1.0 - t.center[a]) / d);
      if (d < -1e-12) reach = std::min(reach, (1.0 - t.center[a]) / d);
    }
    Vec3 p{};
    for (std::size_t a = 0; a < 3; ++a) p[a] = t.center[a] + sign * std::max(reach, 0.0) * t.axis[a];
    pts.push_back(p);
  }
  return pts;
}

inline void write_centerline(const std::vector<Vec3>& pts, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  for (const auto& p : pts) out << detail::exact(p[0]) << ' ' << detail::exact(p[1]) << ' ' << detail::exact(p[2]) << '\n';
}

// Phantom cases first..first+count-1 of the run seed: normalized ground
// truth, both acquisitions and the main tube centerline.
inline std::vector<CaseFiles> write_phantom_cases(const RunConfig& cfg, const fs::path& out_dir, std::size_t first,
                                                  std::size_t count) {
  const auto [cor_spec, ax_spec] = cfg.phantom.specs();
  std::vector<CaseFiles> out;
  RunManifest m{"phantom", snapshot(cfg), cfg.seed, {}, {}, manifest_timestamp()};
  for (std::size_t i = first; i < first + count; ++i) {
    const auto scene = phantom::random_scene(case_seed(cfg.seed, i), cfg.phantom.fov);
    auto cs = cor_spec, as = ax_spec;
    cs.noise_seed = derive_seed(case_seed(cfg.seed, i), 1);
    as.noise_seed = derive_seed(case_seed(cfg.seed, i), 2);
    const auto pc = phantom::make_paired_case(scene, cs, as);
    CaseFiles c{case_name(i), out_dir / case_name(i)};
    write_volume(phantom::to_normalized(pc.ground_truth), c.gt());
    write_volume(phantom::to_normalized(pc.coronal), c.cor());
    write_volume(phantom::to_normalized(pc.axial), c.ax());
    write_centerline(tube_centerline(scene, cfg.phantom.fov), c.centerline());
    for (const auto& f : {c.gt(), c.cor(), c.ax(), c.centerline()}) m.outputs.push_back(f);
    out.push_back(c);
  }
  m.write(out_dir);
  return out;
}

inline std::unique_ptr<trainer::PlaneTeacher> make_teacher(const RunConfig& cfg, const CaseFiles& c,
                                                           const Volume& prepared) {
  if (cfg.teacher == "identity") return std::make_unique<trainer::IdentityTeacher>();
  if (!c.has_gt()) throw InvalidArgument("oracle teacher needs ground truth, missing " + c.gt().string());
  return std::make_unique<trainer::OracleTeacher>(trainer::OracleTeacher::aligned(read_volume(c.gt()), prepared));
}

inline std::vector<trainer::TrainingCase> load_training_cases(const RunConfig& cfg, const std::vector<CaseFiles>& cases) {
  std::vector<trainer::TrainingCase> out;
  for (const auto& c : cases) {
    auto prepared = trainer::prepare_case(read_volume(c.cor()), cfg.train);
    const auto teacher = make_teacher(cfg, c, prepared.volume);
    out.push_back(trainer::make_training_case(c.name, std::move(prepared), *teacher));
  }
  return out;
}

inline constexpr const char* kConfigMetaKey = "run_config";

inline trainer::TrainResult train_run(const RunConfig& cfg, const std::vector<CaseFiles>& cases, const fs::path& run_dir,
                                      std::optional<fs::path> resume = std::nullopt) {
  const auto training = load_training_cases(cfg, cases);
  trainer::TrainOptions opts;
  opts.run_dir = run_dir;
  opts.resume = resume;
  opts.checkpoint_meta[kConfigMetaKey] = to_text(snapshot(cfg));
  const std::string started = manifest_timestamp();
  auto result = trainer::train(training, cfg.train, opts);
  RunManifest m{"train", snapshot(cfg), cfg.seed, {}, {result.checkpoint, run_dir / "history.csv"}, started};
  for (const auto& c : cases) m.inputs.push_back(c.cor());
  m.write(run_dir);
  return result;
}

inline RunConfig config_from_checkpoint(const engine::Checkpoint& ck) {
  const auto it = ck.meta.find(kConfigMetaKey);
  if (it == ck.meta.end()) throw LoadError("checkpoint carries no run configuration");
  return from_text(it->second);
}

inline Volume restore_volume(const engine::Checkpoint& ck, const Volume& anisotropic) {
  return trainer::infer(anisotropic, ck, config_from_checkpoint(ck).train);
}

inline Volume interpolate(const Volume& anisotropic) {
  const auto& s = anisotropic.spacing();
  Volume v = resample_isotropic(anisotropic, std::min({s[0], s[1], s[2]}));
  return v.normalized() ? v : normalize_minmax(v);
}

struct EvalInputs {
  std::vector<Volume> restored;
  std::vector<Volume> interpolated;
  std::vector<Volume> coronal;
  std::vector<Volume> axial;
  std::vector<Volume> ground_truth;  // aligned to the restored grid; empty when unavailable
};

inline metrics::MetricReport evaluate(const EvalInputs& in, const RunConfig& cfg, const std::string& method = "simple") {
  const metrics::ToyFeatures fx(cfg.extractor_seed);
  std::vector<metrics::EvalCase> cases;
  for (std::size_t i = 0; i < in.restored.size(); ++i) {
    metrics::EvalCase ec;
    ec.methods = {&in.restored[i], &in.interpolated[i]};
    ec.coronal_acquisition = &in.coronal[i];
    ec.axial_acquisition = &in.axial[i];
    ec.ground_truth = in.ground_truth.empty() ? nullptr : &in.ground_truth[i];
    cases.push_back(ec);
  }
  return metrics::evaluate({method, "interp"}, cases, fx, cfg.metric);
}

inline void write_report(const metrics::MetricReport& r, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write report " + path.string());
  metrics::write_report_csv(r, out);
}

// Anisotropy of the central axial slice and straightened-tube roughness.
struct CaseAnalysis {
  double ai_axial = 0;
  double mpr_roughness = 0;
};

inline constexpr double kMprWidth = 16.0;
inline constexpr double kMprStep = 0.5;

inline CaseAnalysis analyse(const Volume& v, const analysis::Centerline& centerline) {
  CaseAnalysis a;
  const std::size_t mid = v.dim(1) / 2;
  a.ai_axial = analysis::anisotropy_index(analysis::spectrum(slice(v, Plane::Axial, mid), Plane::Axial, mid));
  a.mpr_roughness = analysis::along_curve_roughness(analysis::straight_mpr(v, centerline, kMprWidth, kMprStep).image);
  return a;
}

struct PipelineResult {
  fs::path report;
  fs::path analysis;
  fs::path checkpoint;
  metrics::MetricReport metrics;
};

struct CaseOutputs {
  Volume restored;
  Volume interpolated;
  Volume ground_truth;  // aligned; empty dims when missing
};

inline CaseOutputs infer_case(const engine::Checkpoint& ck, const CaseFiles& c, const fs::path& out_dir) {
  CaseOutputs o;
  const Volume cor = read_volume(c.cor());
  o.restored = restore_volume(ck, cor);
  o.interpolated = interpolate(cor);
  write_volume(o.restored, out_dir / c.name / "restored.vol");
  write_volume(o.interpolated, out_dir / c.name / "interp.vol");
  if (c.has_gt()) o.ground_truth = align_to(read_volume(c.gt()), o.restored);
  return o;
}

inline EvalInputs gather(const std::vector<CaseFiles>& cases, std::vector<CaseOutputs>& outs) {
  EvalInputs in;
  const bool truth = std::all_of(cases.begin(), cases.end(), [](const CaseFiles& c) { return c.has_gt(); });
  for (std::size_t i = 0; i < cases.size(); ++i) {
    in.restored.push_back(std::move(outs[i].restored));
    in.interpolated.push_back(std::move(outs[i].interpolated));
    in.coronal.push_back(read_volume(cases[i].cor()));
    in.axial.push_back(read_volume(cases[i].ax()));
    if (truth) in.ground_truth.push_back(std::move(outs[i].ground_truth));
  }
  return in;
}

inline void write_analysis(const std::vector<CaseFiles>& cases, const EvalInputs& in, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  out << "case,method,ai_axial,mpr_roughness\n";
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (!fs::exists(cases[i].centerline())) continue;
    const auto cl = analysis::read_centerline(cases[i].centerline());
    std::vector<std::pair<std::string, const Volume*>> methods{{"simple", &in.restored[i]}, {"interp", &in.interpolated[i]}};
    if (!in.ground_truth.empty()) methods.emplace_back("gt", &in.ground_truth[i]);
    for (const auto& [name, v] : methods) {
      const auto a = analyse(*v, cl);
      char buf[96];
      std::snprintf(buf, sizeof buf, "%.9g,%.9g", a.ai_axial, a.mpr_roughness);
      out << cases[i].name << ',' << name << ',' << buf << '\n';
    }
  }
}

// phantom -> prepare -> train -> infer -> eval -> analyse, all below `out_dir`.
inline PipelineResult run_pipeline(const RunConfig& cfg, const fs::path& out_dir) {
  const std::string started = manifest_timestamp();
  const auto cases = stage("phantom", [&] { return write_phantom_cases(cfg, out_dir / "data", 0, cfg.phantom.cases); });
  const std::size_t n_train = cases.size() - cfg.holdout;
  const std::vector<CaseFiles> train_cases(cases.begin(), cases.begin() + static_cast<std::ptrdiff_t>(n_train));
  const std::vector<CaseFiles> eval_cases =
      cfg.holdout > 0 ? std::vector<CaseFiles>(cases.begin() + static_cast<std::ptrdiff_t>(n_train), cases.end()) : train_cases;
  const auto trained = stage("train", [&] { return train_run(cfg, train_cases, out_dir / "run"); });
  PipelineResult r;
  r.checkpoint = trained.checkpoint;
  auto outs = stage("infer", [&] {
    const auto ck = engine::read_checkpoint(trained.checkpoint);
    std::vector<CaseOutputs> o;
    for (const auto& c : eval_cases) o.push_back(infer_case(ck, c, out_dir / "restored"));
    return o;
  });
  const auto inputs = gather(eval_cases, outs);
  r.report = out_dir / "report.csv";
  r.metrics = stage("eval", [&] {
    auto rep = evaluate(inputs, cfg);
    write_report(rep, r.report);
    return rep;
  });
  r.analysis = out_dir / "analysis.csv";
  stage("analyse", [&] {
    write_analysis(eval_cases, inputs, r.analysis);
    return 0;
  });
  RunManifest m{"pipeline", snapshot(cfg), cfg.seed, {}, {r.checkpoint, r.report, r.analysis}, started};
  m.write(out_dir);
  return r;
}

struct AblationRow {
  std::string variant;
  metrics::PlaneScores coronal;
  metrics::PlaneScores axial;
  double kid_avg() const { return 0.5 * (coronal.kid + axial.kid); }
  double is_avg() const { return 0.5 * (coronal.is + axial.is); }
};

inline constexpr const char* kAblationHeader = "variant,kid_cor,kid_ax,kid_avg,is_cor,is_ax,is_avg";

inline void write_ablation_csv(const std::vector<AblationRow>& rows, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  out << kAblationHeader << '\n';
  for (const auto& r : rows) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", r.coronal.kid, r.axial.kid, r.kid_avg(), r.coronal.is,
                  r.axial.is, r.is_avg());
    out << r.variant << ',' << buf << '\n';
  }
}

struct AblationResult {
  std::vector<AblationRow> rows;
  fs::path csv;
  bool simple_smallest_kid = false;
};

// Coronal-only (a), axial-only (b) and full training on identical data and seeds.
inline AblationResult run_ablation(const RunConfig& cfg, const fs::path& out_dir) {
  const std::string started = manifest_timestamp();
  const auto cases = stage("phantom", [&] { return write_phantom_cases(cfg, out_dir / "data", 0, cfg.phantom.cases); });
  const std::size_t n_train = cases.size() - cfg.holdout;
  const std::vector<CaseFiles> train_cases(cases.begin(), cases.begin() + static_cast<std::ptrdiff_t>(n_train));
  const std::vector<CaseFiles> eval_cases =
      cfg.holdout > 0 ? std::vector<CaseFiles>(cases.begin() + static_cast<std::ptrdiff_t>(n_train), cases.end()) : train_cases;
  AblationResult res;
  const std::array<std::pair<const char*, std::pair<double, double>>, 3> variants{
      {{"a", {cfg.train.alpha, 0.0}}, {"b", {0.0, cfg.train.beta}}, {"simple", {cfg.train.alpha, cfg.train.beta}}}};
  for (const auto& [name, weights] : variants) {
    RunConfig v = cfg;
    v.train.alpha = weights.first;
    v.train.beta = weights.second;
    const std::string tag = std::string("train:") + name;
    const auto trained = stage(tag, [&] { return train_run(v, train_cases, out_dir / name); });
    auto outs = stage(std::string("infer:") + name, [&] {
      const auto ck = engine::read_checkpoint(trained.checkpoint);
      std::vector<CaseOutputs> o;
      for (const auto& c : eval_cases) o.push_back(infer_case(ck, c, out_dir / name / "restored"));
      return o;
    });
    const auto inputs = gather(eval_cases, outs);
    const auto rep = stage(std::string("eval:") + name, [&] { return evaluate(inputs, v, name); });
    write_report(rep, out_dir / name / "report.csv");
    const auto& m = rep.method(name);
    res.rows.push_back({name, m.coronal, m.axial});
  }
  res.csv = out_dir / "ablation.csv";
  write_ablation_csv(res.rows, res.csv);
  res.simple_smallest_kid = res.rows[2].kid_avg() <= std::min(res.rows[0].kid_avg(), res.rows[1].kid_avg());
  RunManifest m{"ablate", snapshot(cfg), cfg.seed, {}, {res.csv}, started};
  m.write(out_dir);
  return res;
}

}  // namespace isoplane::pipeline
