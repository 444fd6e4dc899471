#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include "isoplane/pipeline.hpp"

using namespace isoplane;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config_file;
  std::string profile;
  std::optional<std::uint64_t> seed;
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::string> sets;
};

RunConfig resolve(const Globals& g) {
  KeyValues file;
  if (!g.config_file.empty()) file = read_key_values(g.config_file);
  KeyValues overrides;
  for (const auto& s : g.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw InvalidArgument("--set expects key=value, got '" + s + "'");
    overrides.emplace_back(detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1)));
  }
  if (g.seed) overrides.emplace_back("seed", std::to_string(*g.seed));
  return resolve_config(file, overrides, g.profile);
}

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

std::string config_keys_help() {
  const auto desk = RunConfig::desk();
  const auto paper = RunConfig::paper();
  std::string s = "Config keys (--set key=value or in --config file; desk / paper defaults):\n";
  auto shown = [](std::string v) {
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (end && *end == '\0' && v.find('.') != std::string::npos) v = num(x);
    return v;
  };
  for (const auto& f : config_fields()) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "  %-22s %-12s %-12s %s\n", f.key.c_str(), shown(f.get(desk)).c_str(),
                  shown(f.get(paper)).c_str(), f.help.c_str());
    s += buf;
  }
  s += "Environment: ISOPLANE_SEED overrides the configured seed; SOURCE_DATE_EPOCH pins manifest timestamps.\n";
  return s;
}

void write_csv_line(const fs::path& path, const std::string& header, const std::string& line) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << header << '\n' << line << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"isoplane: isotropic restoration of anisotropic MR volumes from orthogonal plane supervision"};
  app.require_subcommand(1);
  app.footer(config_keys_help());
  app.get_formatter()->column_width(34);

  Globals g;
  app.add_option("--config", g.config_file, "flat key = value config file")->check(CLI::ExistingFile);
  app.add_option("--profile", g.profile, "built-in profile: desk or paper (default desk)");
  app.add_option("--seed", g.seed, "run seed (overrides config; ISOPLANE_SEED overrides both)");
  app.add_option("--threads", g.threads, "worker threads")->capture_default_str();
  app.add_option("--set", g.sets, "config override key=value (repeatable)");

  // phantom
  auto* ph = app.add_subcommand("phantom", "generate phantom cases (gt/cor/ax volumes, centerline)");
  std::string ph_out;
  std::size_t ph_first = 0;
  std::optional<std::size_t> ph_cases;
  ph->add_option("--out", ph_out, "output directory")->required();
  ph->add_option("--cases", ph_cases, "number of cases (default: config key cases = 3)");
  ph->add_option("--first", ph_first, "index of the first case")->capture_default_str();

  // prepare
  auto* pr = app.add_subcommand("prepare", "resample an anisotropic volume to isotropic spacing and plan patches");
  std::string pr_in, pr_out, pr_grid;
  pr->add_option("--in", pr_in, "anisotropic volume (.vol)")->required()->check(CLI::ExistingFile);
  pr->add_option("--out", pr_out, "interpolated volume (.vol)")->required();
  pr->add_option("--grid", pr_grid, "optional CSV of patch windows");

  // train
  auto* tr = app.add_subcommand("train", "train the generator and plane discriminators");
  std::string tr_data, tr_run, tr_resume;
  tr->add_option("--data", tr_data, "directory of case_* folders")->required();
  tr->add_option("--run", tr_run, "run directory for checkpoints and history")->required();
  tr->add_option("--resume", tr_resume, "checkpoint to resume from")->check(CLI::ExistingFile);

  // infer
  auto* in = app.add_subcommand("infer", "restore an anisotropic volume with a trained checkpoint");
  std::string in_ck, in_in, in_out;
  in->add_option("--checkpoint", in_ck, "model checkpoint")->required()->check(CLI::ExistingFile);
  in->add_option("--in", in_in, "anisotropic volume (.vol)")->required()->check(CLI::ExistingFile);
  in->add_option("--out", in_out, "restored volume (.vol)")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "KID / IS / FID of restored and interpolated volumes (one flag set per case)");
  std::vector<std::string> ev_restored, ev_interp, ev_ref_ax, ev_cor, ev_gt;
  std::string ev_out;
  ev->add_option("--restored", ev_restored, "restored volume(s)")->required()->check(CLI::ExistingFile);
  ev->add_option("--interp", ev_interp, "interpolated volume(s)")->required()->check(CLI::ExistingFile);
  ev->add_option("--ref-ax", ev_ref_ax, "axial reference acquisition(s)")->required()->check(CLI::ExistingFile);
  ev->add_option("--cor", ev_cor, "coronal acquisition(s)")->required()->check(CLI::ExistingFile);
  ev->add_option("--gt", ev_gt, "ground-truth volume(s); real slices come from these when given")
      ->check(CLI::ExistingFile);
  ev->add_option("--out", ev_out, "report CSV")->required();

  // fft
  auto* ff = app.add_subcommand("fft", "log-magnitude spectrum and anisotropy index of one slice");
  std::string ff_in, ff_plane = "axial", ff_out, ff_csv;
  std::optional<std::size_t> ff_index;
  double ff_band = analysis::kBandFraction;
  ff->add_option("--in", ff_in, "volume (.vol)")->required()->check(CLI::ExistingFile);
  ff->add_option("--plane", ff_plane, "coronal, axial or sagittal")->capture_default_str();
  ff->add_option("--index", ff_index, "slice index (default: central slice)");
  ff->add_option("--band", ff_band, "band fraction")->capture_default_str();
  ff->add_option("--out", ff_out, "spectrum image (.pgm)")->required();
  ff->add_option("--csv", ff_csv, "anisotropy index CSV");

  // mpr
  auto* mp = app.add_subcommand("mpr", "straight multi-planar reconstruction along a centerline");
  std::string mp_in, mp_cl, mp_out, mp_csv;
  double mp_width = pipeline::kMprWidth, mp_step = pipeline::kMprStep;
  mp->add_option("--in", mp_in, "volume (.vol)")->required()->check(CLI::ExistingFile);
  mp->add_option("--centerline", mp_cl, "centerline text file, one 'x y z' (mm) per line")
      ->required()
      ->check(CLI::ExistingFile);
  mp->add_option("--width", mp_width, "width across the curve (mm)")->capture_default_str();
  mp->add_option("--step", mp_step, "sampling step (mm)")->capture_default_str();
  mp->add_option("--out", mp_out, "MPR image (.pgm)")->required();
  mp->add_option("--csv", mp_csv, "roughness CSV");

  // pipeline
  auto* pl = app.add_subcommand("pipeline", "phantom -> prepare -> train -> infer -> eval -> analyse");
  std::string pl_out;
  pl->add_option("--out", pl_out, "output directory")->required();

  // ablate
  auto* ab = app.add_subcommand("ablate", "train coronal-only (a), axial-only (b) and full variants and compare");
  std::string ab_out;
  ab->add_option("--out", ab_out, "output directory")->required();

  for (auto* sub : app.get_subcommands({})) sub->footer(app.get_footer());

  CLI11_PARSE(app, argc, argv);

  try {
    set_thread_budget(g.threads);
    RunConfig cfg = resolve(g);

    if (*ph) {
      const std::size_t n = ph_cases.value_or(cfg.phantom.cases);
      if (ph_cases) cfg.phantom.cases = n;
      const auto cases = pipeline::write_phantom_cases(cfg, ph_out, ph_first, n);
      std::cout << "wrote " << cases.size() << " cases to " << ph_out << '\n';
    } else if (*pr) {
      const Volume aniso = read_volume(pr_in);
      const auto pc = trainer::prepare_case(aniso, cfg.train);
      write_volume(pipeline::interpolate(aniso), pr_out);
      if (!pr_grid.empty()) {
        std::ofstream out(pr_grid, std::ios::trunc);
        out << "window,start0,start1,start2,size\n";
        for (std::size_t p = 0; p < pc.grid.patch_count(); ++p) {
          const auto w = pc.grid.window(p);
          out << p << ',' << w[0] << ',' << w[1] << ',' << w[2] << ',' << pc.grid.patch_size << '\n';
        }
      }
      std::cout << "prepared " << pr_out << " (" << pc.grid.patch_count() << " patches)\n";
    } else if (*tr) {
      const auto cases = pipeline::list_cases(tr_data);
      std::optional<fs::path> resume;
      if (!tr_resume.empty()) resume = tr_resume;
      const auto r = pipeline::train_run(cfg, cases, tr_run, resume);
      std::cout << "checkpoint " << r.checkpoint.string() << " after " << r.global_step << " steps\n";
    } else if (*in) {
      const auto ck = engine::read_checkpoint(in_ck);
      const Volume out = pipeline::restore_volume(ck, read_volume(in_in));
      write_volume(out, in_out);
      RunManifest m{"infer", snapshot(pipeline::config_from_checkpoint(ck)), cfg.seed, {in_ck, in_in}, {in_out}, manifest_timestamp()};
      m.write(fs::path(in_out).parent_path().empty() ? fs::path(".") : fs::path(in_out).parent_path());
    } else if (*ev) {
      const std::size_t n = ev_restored.size();
      if (ev_interp.size() != n || ev_ref_ax.size() != n || ev_cor.size() != n || (!ev_gt.empty() && ev_gt.size() != n))
        throw InvalidArgument("eval: --restored, --interp, --ref-ax, --cor (and --gt) must be given once per case");
      pipeline::EvalInputs inputs;
      for (std::size_t i = 0; i < n; ++i) {
        inputs.restored.push_back(read_volume(ev_restored[i]));
        inputs.interpolated.push_back(read_volume(ev_interp[i]));
        inputs.axial.push_back(read_volume(ev_ref_ax[i]));
        inputs.coronal.push_back(read_volume(ev_cor[i]));
        if (!ev_gt.empty()) inputs.ground_truth.push_back(align_to(read_volume(ev_gt[i]), inputs.restored.back()));
      }
      const auto rep = pipeline::evaluate(inputs, cfg);
      pipeline::write_report(rep, ev_out);
      std::vector<fs::path> ins;
      for (const auto* v : {&ev_restored, &ev_interp, &ev_ref_ax, &ev_cor, &ev_gt})
        for (const auto& p : *v) ins.emplace_back(p);
      RunManifest m{"eval", snapshot(cfg), cfg.seed, ins, {ev_out}, manifest_timestamp()};
      m.write(fs::path(ev_out).parent_path().empty() ? fs::path(".") : fs::path(ev_out).parent_path());
      metrics::write_report_csv(rep, std::cout);
    } else if (*ff) {
      const Volume v = read_volume(ff_in);
      const Plane plane = parse_plane(ff_plane);
      const std::size_t axis = static_cast<std::size_t>(plane);
      const std::size_t idx = ff_index.value_or(v.dim(axis) / 2);
      if (idx >= v.dim(axis)) throw InvalidArgument("--index " + std::to_string(idx) + " out of range");
      const auto sp = analysis::spectrum(slice(v, plane, idx), plane, idx);
      const double ai = analysis::anisotropy_index(sp, ff_band);
      float hi = 0;
      for (float x : sp.log_magnitude.data) hi = std::max(hi, x);
      write_pgm(sp.log_magnitude, ff_out, 0.0, hi > 0 ? hi : 1.0);
      if (!ff_csv.empty()) write_csv_line(ff_csv, "plane,index,band_fraction,anisotropy_index", ff_plane + "," + std::to_string(idx) + "," + num(ff_band) + "," + num(ai));
      std::cout << "anisotropy_index " << num(ai) << '\n';
    } else if (*mp) {
      const Volume v = read_volume(mp_in);
      const auto m = analysis::straight_mpr(v, analysis::read_centerline(mp_cl), mp_width, mp_step);
      write_pgm(m.image, mp_out, v.normalized() ? -1.0 : 0.0, 1.0);
      const double rough = analysis::along_curve_roughness(m.image);
      if (!mp_csv.empty())
        write_csv_line(mp_csv, "rows,cols,clamped,roughness",
                       std::to_string(m.image.rows) + "," + std::to_string(m.image.cols) + "," + (m.clamped ? "1" : "0") + "," + num(rough));
      if (m.clamped) std::cerr << "warning: MPR samples fell outside the volume extent\n";
      std::cout << "roughness " << num(rough) << '\n';
    } else if (*pl) {
      const auto r = pipeline::run_pipeline(cfg, pl_out);
      metrics::write_report_csv(r.metrics, std::cout);
    } else if (*ab) {
      const auto r = pipeline::run_ablation(cfg, ab_out);
      std::ifstream csv(r.csv);
      std::cout << csv.rdbuf();
      std::cout << "simple has the smallest averaged KID: " << (r.simple_smallest_kid ? "yes" : "no") << '\n';
    }
  } catch (const pipeline::StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
