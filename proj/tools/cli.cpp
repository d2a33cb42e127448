#include "cli.hpp"

#include <pthread.h>
#include <signal.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "slideanno/annostore.hpp"
#include "slideanno/error.hpp"
#include "slideanno/pyramid.hpp"
#include "slideanno/screening.hpp"
#include "slideanno/service.hpp"
#include "slideanno/stats.hpp"
#include "slideanno/synthetic.hpp"

namespace slideanno::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Failure {
  int code;
  std::string message;
};

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return kRuntimeFailure;
  if (dynamic_cast<const VersionError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
      dynamic_cast<const FormatError*>(&e) || dynamic_cast<const NotFoundError*>(&e) ||
      dynamic_cast<const RangeError*>(&e)) {
    return kUsage;
  }
  return kRuntimeFailure;
}

int cmd_serve(const fs::path& config_path, std::ostream& out) {
  if (!fs::exists(config_path)) throw Failure{kUsage, "config file not found: " + config_path.string()};
  ServiceConfig cfg;
  try {
    cfg = load_service_config(config_path);
  } catch (const Error& e) {
    throw Failure{kUsage, e.what()};
  }

  // Block the shutdown signals before any server thread exists so that only
  // the sigwait below ever sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  std::unique_ptr<Service> service;
  try {
    service = std::make_unique<Service>(cfg);
  } catch (const Error& e) {
    throw Failure{kRuntimeFailure, std::string("startup failed: ") + e.what()};
  }
  const int port = service->start();
  out << "listening on port " << port << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  service->stop();
  out << "store flushed to " << cfg.database_path.string() << std::endl;
  return kOk;
}

int cmd_synth(const fs::path& spec_path, const fs::path& out_dir, std::ostream& out) {
  SyntheticSpec spec;
  try {
    spec = load_synthetic_spec(spec_path);
  } catch (const Error& e) {
    throw Failure{kUsage, e.what()};
  }
  generate_synthetic_slide(spec, out_dir);
  const PyramidSlide slide = open_slide(out_dir);
  out << "wrote " << out_dir.string() << " (" << slide.width() << "x" << slide.height() << ", "
      << slide.level_count() << " levels)\n";
  return kOk;
}

struct MaskOptions {
  fs::path slide;
  fs::path out;
  std::optional<fs::path> plan_out;
  int se_radius = kDefaultSeRadius;
  double overview_downsample = kDefaultOverviewDownsample;
  int64_t cell_size = kDefaultCellSize;
  double occupancy_min = kDefaultOccupancyMin;
  bool report = false;
  bool json = false;
};

int cmd_mask(const MaskOptions& o, std::ostream& out) {
  std::optional<PyramidSlide> slide;
  try {
    slide = open_slide(o.slide);
  } catch (const Error& e) {
    throw Failure{kRuntimeFailure, std::string("cannot open slide: ") + e.what()};
  }
  const TissueMask tm = compute_tissue_mask(*slide, o.overview_downsample, o.se_radius);
  write_pbm(tm.mask, o.out);
  const ScreeningPlan plan = build_screening_plan(tm, o.cell_size, o.occupancy_min);
  if (o.plan_out) {
    std::ofstream f(*o.plan_out, std::ios::trunc);
    if (!f) throw IoError("cannot write " + o.plan_out->string());
    f << plan_to_json(plan) << '\n';
  }
  if (o.json) {
    json doc{{"tissue_fraction", tm.tissue_fraction()},
             {"kept_cells", plan.cells.size()},
             {"threshold", tm.otsu.threshold},
             {"degenerate", tm.otsu.degenerate},
             {"overview_level", tm.overview_level},
             {"scale", tm.scale},
             {"mask_width", tm.mask.width()},
             {"mask_height", tm.mask.height()}};
    out << doc.dump() << '\n';
  } else if (o.report) {
    out << std::fixed << std::setprecision(6) << "tissue_fraction " << tm.tissue_fraction() << '\n'
        << "kept_cells " << plan.cells.size() << '\n'
        << "threshold " << tm.otsu.threshold << (tm.otsu.degenerate ? " (degenerate)" : "") << '\n'
        << "overview_level " << tm.overview_level << " (scale " << tm.scale << ")\n";
  }
  return kOk;
}

struct StatsOptions {
  fs::path db;
  std::vector<int64_t> kappa;
  std::optional<int64_t> timing;
  std::optional<int64_t> slide;
  double gap_cutoff = kDefaultGapCutoffSeconds;
  std::string pass = "both";
  bool json = false;
};

int cmd_stats(const StatsOptions& o, std::ostream& out) {
  if (o.kappa.empty() == !o.timing.has_value()) {
    throw Failure{kUsage, "give exactly one of --kappa A B or --timing PERSON"};
  }
  const AnnotationStore store = load_store(o.db);
  if (!o.kappa.empty()) {
    const ConfusionMatrix m = confusion_matrix(store, o.slide, o.kappa[0], o.kappa[1]);
    if (o.json) {
      out << kappa_report_json(m) << '\n';
    } else {
      out << format_confusion_table(store, m);
    }
    return kOk;
  }
  std::vector<AnnotationPass> passes;
  if (o.pass == "first" || o.pass == "both") passes.push_back(AnnotationPass::First);
  if (o.pass == "second" || o.pass == "both") passes.push_back(AnnotationPass::Second);
  json doc = json::object();
  for (AnnotationPass pass : passes) {
    const TimingStats t = annotation_timing(store, *o.timing, o.gap_cutoff, pass);
    if (o.json) {
      doc[std::string(to_string(pass))] = json::parse(timing_report_json(t));
      continue;
    }
    out << to_string(pass) << " pass: events " << t.n_events << ", intervals " << t.n_intervals;
    if (t.mean_s) {
      out << std::fixed << std::setprecision(3) << ", mean " << *t.mean_s << " s, median "
          << *t.median_s << " s";
    } else {
      out << ", mean n/a";
    }
    out << " (cutoff " << t.gap_cutoff_s << " s)\n";
  }
  if (o.json) out << doc.dump() << '\n';
  return kOk;
}

int cmd_export(const fs::path& db, const fs::path& file, std::ostream& out) {
  const AnnotationStore store = load_store(db);
  save_store(store, file);
  out << "exported " << store.annotations().size() << " annotations\n";
  return kOk;
}

int cmd_import(const fs::path& db, const fs::path& file, bool merge, std::ostream& out) {
  const AnnotationStore incoming = load_store(file);
  AnnotationStore target;
  if (fs::exists(db)) target = load_store(db);
  if (merge) {
    target.merge(incoming);
  } else if (!target.empty()) {
    throw Failure{kUsage, "database " + db.string() + " is not empty; use --merge"};
  } else {
    target = incoming;
  }
  save_store(target, db);
  out << "database now holds " << target.annotations().size() << " annotations\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"slideanno: blinded multi-rater annotation of pyramidal slides"};
  app.require_subcommand(1);

  fs::path config_path;
  auto* serve = app.add_subcommand("serve", "Run the HTTP annotation service");
  serve->add_option("--config", config_path, "Service config (JSON)")->required();

  fs::path spec_path, synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic slide with ground truth");
  synth->add_option("--spec", spec_path, "Synthetic slide spec (JSON)")->required();
  synth->add_option("--out", synth_out, "Output container directory")->required();

  MaskOptions mask_opts;
  auto* mask = app.add_subcommand("mask", "Compute the tissue mask and screening grid");
  mask->add_option("--slide", mask_opts.slide, "Slide container directory")->required();
  mask->add_option("--out", mask_opts.out, "Output bitmap (PBM)")->required();
  mask->add_option("--se-radius", mask_opts.se_radius, "Closing radius in mask pixels")
      ->check(CLI::NonNegativeNumber);
  mask->add_option("--overview-downsample", mask_opts.overview_downsample)->check(CLI::PositiveNumber);
  mask->add_option("--cell-size", mask_opts.cell_size, "Grid cell size in level-0 px")
      ->check(CLI::PositiveNumber);
  mask->add_option("--occupancy-min", mask_opts.occupancy_min, "Minimum tissue fraction per cell")
      ->check(CLI::Range(1e-12, 1.0));
  mask->add_option("--plan", mask_opts.plan_out, "Also write the screening plan (JSON)");
  mask->add_flag("--report", mask_opts.report, "Print tissue fraction and kept-cell count");
  mask->add_flag("--json", mask_opts.json, "Print the report as JSON");

  StatsOptions stats_opts;
  auto* stats = app.add_subcommand("stats", "Inter-rater agreement and annotation timing");
  stats->add_option("--db", stats_opts.db, "Database file")->required();
  stats->add_option("--kappa", stats_opts.kappa, "Two person ids")->expected(2);
  stats->add_option("--timing", stats_opts.timing, "Person id");
  stats->add_option("--slide", stats_opts.slide, "Restrict to one slide");
  stats->add_option("--gap-cutoff", stats_opts.gap_cutoff, "Session-break cutoff in seconds")
      ->check(CLI::PositiveNumber);
  stats->add_option("--pass", stats_opts.pass, "first, second or both")
      ->check(CLI::IsMember({"first", "second", "both"}));
  stats->add_flag("--json", stats_opts.json, "Machine-readable output");

  fs::path export_db, export_out;
  auto* exp = app.add_subcommand("export", "Write the database in exchange format");
  exp->add_option("--db", export_db)->required();
  exp->add_option("--out", export_out)->required();

  fs::path import_db, import_in;
  bool merge = false;
  auto* imp = app.add_subcommand("import", "Load an exchange file into a database");
  imp->add_option("--db", import_db)->required();
  imp->add_option("--in", import_in)->required();
  imp->add_flag("--merge", merge, "Union with existing content; newer labels win");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return kUsage;
  }

  try {
    if (serve->parsed()) return cmd_serve(config_path, out);
    if (synth->parsed()) return cmd_synth(spec_path, synth_out, out);
    if (mask->parsed()) return cmd_mask(mask_opts, out);
    if (stats->parsed()) return cmd_stats(stats_opts, out);
    if (exp->parsed()) return cmd_export(export_db, export_out, out);
    if (imp->parsed()) return cmd_import(import_db, import_in, merge, out);
  } catch (const Failure& f) {
    err << "error: " << f.message << '\n';
    return f.code;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kUsage;
}

}  // namespace slideanno::cli
