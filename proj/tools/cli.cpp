#include "cli.hpp"

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "dwellmap/analysis.hpp"
#include "dwellmap/api.hpp"
#include "dwellmap/error.hpp"
#include "dwellmap/raster.hpp"
#include "dwellmap/simulator.hpp"
#include "dwellmap/storage.hpp"
#include "dwellmap/validation.hpp"

namespace fs = std::filesystem;

namespace dwellmap::cli {

namespace {

struct Config {
  std::string data_dir = "./data";
  int port = 8080;
  std::string host = "0.0.0.0";
  std::int64_t scale = 1;
  std::string threshold_mode = "mean";
  std::string output_dir = "./out";
  std::size_t batch_cap = 1000;
  std::string cors;
  bool batched_flush = false;
};

// "mean" | "fixed:<v>" | "<v>"
std::optional<double> parse_threshold(const std::string& mode) {
  if (mode == "mean") return std::nullopt;
  std::string number = mode;
  if (mode.rfind("fixed:", 0) == 0) number = mode.substr(6);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(number, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != number.size() || number.empty() || !(v >= 0.0 && v <= 1.0)) {
    throw Error(ErrorCode::validation,
                fmt::format("threshold mode '{}' must be 'mean' or 'fixed:v' with v in [0, 1]", mode));
  }
  return v;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

StoreOptions store_options(const Config& c) { return StoreOptions{!c.batched_flush}; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorCode::io, fmt::format("cannot write {}", path.string()));
}

fs::path prepare_output(const Config& c) {
  std::error_code ec;
  fs::create_directories(c.output_dir, ec);
  if (ec) throw Error(ErrorCode::io, fmt::format("cannot create {}: {}", c.output_dir, ec.message()));
  return fs::path(c.output_dir);
}

PayloadFormat parse_format(const std::string& text) {
  if (text == "raster") return PayloadFormat::raster;
  if (text == "grid") return PayloadFormat::grid;
  if (text == "none") return PayloadFormat::none;
  throw Error(ErrorCode::validation, fmt::format("unknown format '{}'", text));
}

IngestionService* g_service = nullptr;

extern "C" void on_signal(int) {
  if (g_service) g_service->stop();
}

int cmd_serve(const Config& c, std::ostream& out) {
  if (c.port < 0 || c.port > 65535) {
    throw Error(ErrorCode::validation, fmt::format("invalid port {}", c.port));
  }
  EventStore store(c.data_dir, store_options(c));
  ApiConfig api{c.scale, parse_threshold(c.threshold_mode), c.batch_cap, split_list(c.cors)};
  IngestionService service(store, api);
  const int port = service.bind(c.host, c.port);
  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  out << fmt::format("listening on {}:{} data_dir={}\n", c.host, port, c.data_dir) << std::flush;
  service.serve();
  g_service = nullptr;
  store.flush();
  out << "stopped\n";
  return kOk;
}

int cmd_heatmap(const Config& c, const std::string& test, const std::string& image,
                const std::optional<std::string>& user, const std::string& format, std::ostream& out) {
  if (!fs::exists(c.data_dir)) throw Error(ErrorCode::not_found, fmt::format("no data directory {}", c.data_dir));
  EventStore store(c.data_dir, store_options(c));
  AnalysisOptions options;
  options.scale = c.scale;
  options.threshold = parse_threshold(c.threshold_mode);
  options.format = parse_format(format);
  const ImageAnalysis analysis = analyze_image(store, test, image, user, options);
  const fs::path dir = prepare_output(c);
  write_png(dir / "heatmap.png", render_rgba(analysis.heatmap));
  write_text(dir / "heatmap.json", heatmap_payload(analysis, options.format));
  write_text(dir / "heatmap.meta", heatmap_sidecar(analysis));
  out << fmt::format("heatmap for {} user(s) written to {}\n", analysis.users.size(), dir.string());
  return kOk;
}

int cmd_validate(const Config& c, const std::string& test, const std::string& image, int sweep_steps,
                 bool full_resolution, std::ostream& out) {
  if (!fs::exists(c.data_dir)) throw Error(ErrorCode::not_found, fmt::format("no data directory {}", c.data_dir));
  EventStore store(c.data_dir, store_options(c));
  AnalysisOptions options;
  options.scale = c.scale;
  options.threshold = parse_threshold(c.threshold_mode);
  options.full_resolution = full_resolution;
  const ValidationRun run = validate_image(store, test, image, options);
  const fs::path dir = prepare_output(c);
  write_text(dir / "report.json", validation_payload(run));
  write_text(dir / "stats.csv", stats_table_header() + stats_table_row(run.report));
  fs::create_directories(dir / "overlays");
  for (const auto& [user, name] : run.overlay_names) {
    write_png(dir / "overlays" / name, user_overlay(store, StreamKey{test, image, user}, options));
  }
  if (sweep_steps > 0) {
    const ImageMeta meta = *store.find_image(image);
    const std::vector<double> grid = uniform_threshold_grid(sweep_steps);
    nlohmann::ordered_json sweeps = nlohmann::ordered_json::array();
    for (const UserOutcome& o : run.report.per_user) {
      const StreamKey key{test, image, o.user_id};
      const HeatMap hm = user_heatmap(store, key, meta, c.scale);
      const SweepResult result = sweep_threshold(hm, MarkSet{meta, *store.load_marks(key)}, grid);
      nlohmann::ordered_json points = nlohmann::ordered_json::array();
      for (const SweepPoint& p : result.points) {
        points.push_back({{"threshold", p.threshold}, {"jaccard", p.jaccard.value}});
      }
      sweeps.push_back({{"user_id", o.user_id},
                        {"best_threshold", result.best_threshold},
                        {"best_jaccard", result.best_jaccard},
                        {"points", std::move(points)}});
    }
    write_text(dir / "sweep.json", sweeps.dump(2) + "\n");
  }
  const ImageStats& s = run.report.per_image;
  out << fmt::format("{} user(s): min {:.4f} avg {:.4f} max {:.4f}\n", s.users, s.min, s.avg, s.max);
  return kOk;
}

int cmd_simulate(const Config& c, const std::string& suite_path, std::ostream& out) {
  std::ifstream in(suite_path);
  if (!in) throw Error(ErrorCode::not_found, fmt::format("cannot open suite {}", suite_path));
  const sim::Suite suite = sim::parse_suite(in);
  EventStore store(c.data_dir, store_options(c));
  const fs::path dir = prepare_output(c);
  fs::create_directories(dir / "traces");
  const std::optional<double> threshold = parse_threshold(c.threshold_mode);

  nlohmann::ordered_json results = nlohmann::ordered_json::array();
  for (const sim::BehaviorScript& script : suite.scripts) {
    store.register_image(script.image);
    const StreamKey key{suite.test_id, script.image.image_id, script.user_id};
    const std::vector<ViewportEvent> events = sim::generate(script);
    ingest_events(store, key, events);
    if (!script.planted_rois.empty()) submit_marks(store, key, script.planted_rois);

    std::string trace;
    for (std::size_t i = 0; i < events.size(); ++i) trace += encode_record(i, events[i]) + "\n";
    write_text(dir / "traces" / (sanitize_component(script.name.empty() ? script.user_id : script.name) + ".log"),
               trace);

    nlohmann::ordered_json entry{{"name", script.name}, {"user_id", script.user_id},
                                 {"image_id", script.image.image_id}, {"events", events.size()}};
    if (!script.planted_rois.empty()) {
      const sim::RecoveryResult r = sim::recovery_score(script, c.scale, threshold);
      entry["jaccard"] = r.jaccard.value;
      entry["mask_pixels"] = r.jaccard.a_count;
      entry["roi_pixels"] = r.jaccard.b_count;
      entry["degenerate_mask"] = r.degenerate_mask;
      entry["degenerate_union"] = r.jaccard.degenerate;
      out << fmt::format("{:<24} jaccard {:.4f}{}\n", script.name, r.jaccard.value,
                         r.degenerate_mask ? " (degenerate mask)" : "");
    }
    results.push_back(std::move(entry));
  }
  store.flush();
  nlohmann::ordered_json report{{"test_id", suite.test_id}, {"scripts", std::move(results)}};
  write_text(dir / "recovery.json", report.dump(2) + "\n");
  return kOk;
}

int cmd_export(const Config& c, const std::string& test, const std::string& path, std::ostream& out) {
  if (!fs::exists(c.data_dir)) throw Error(ErrorCode::not_found, fmt::format("no data directory {}", c.data_dir));
  EventStore store(c.data_dir, store_options(c));
  std::ostringstream buffer;
  store.export_test(test, buffer);
  write_text(path, buffer.str());
  out << fmt::format("exported test '{}' to {}\n", test, path);
  return kOk;
}

int cmd_import(const Config& c, const std::string& path, std::ostream& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::not_found, fmt::format("cannot open archive {}", path));
  EventStore store(c.data_dir, store_options(c));
  const std::string test = store.import_archive(in);
  store.flush();
  out << fmt::format("imported test '{}' into {}\n", test, c.data_dir);
  return kOk;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::not_found: return kNotFound;
    case ErrorCode::io:
    case ErrorCode::corrupt: return kIo;
    default: return kValidation;
  }
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"dwellmap: interest heatmaps from zoom/pan viewport logs"};
  app.require_subcommand(1);
  Config c;

  // Precedence: flag > environment > default.
  app.add_option("--data-dir", c.data_dir, "Event store root")->envname("DWELLMAP_DATA_DIR");
  app.add_option("--scale", c.scale, "Grid downsampling factor")->envname("DWELLMAP_SCALE")->check(CLI::PositiveNumber);
  app.add_option("--threshold", c.threshold_mode, "mean | fixed:<v>")->envname("DWELLMAP_THRESHOLD");
  app.add_option("--output-dir", c.output_dir, "Where analysis files are written")->envname("DWELLMAP_OUTPUT_DIR");
  app.add_flag("--batched-flush", c.batched_flush, "fsync on flush/close instead of per append")
      ->envname("DWELLMAP_BATCHED_FLUSH");

  auto* serve = app.add_subcommand("serve", "Run the HTTP ingestion and analysis service");
  serve->add_option("--port", c.port, "TCP port (0 picks a free one)")->envname("DWELLMAP_PORT");
  serve->add_option("--host", c.host, "Bind address")->envname("DWELLMAP_HOST");
  serve->add_option("--batch-cap", c.batch_cap, "Maximum events per batch")->envname("DWELLMAP_BATCH_CAP");
  serve->add_option("--cors", c.cors, "Comma-separated allowed origins, or *")->envname("DWELLMAP_CORS");

  std::string test;
  std::string image;
  std::string user;
  std::string format = "raster";
  auto* heatmap = app.add_subcommand("heatmap", "Render a heatmap for an image");
  heatmap->add_option("--test", test, "Test id")->required();
  heatmap->add_option("--image", image, "Image id")->required();
  heatmap->add_option("--user", user, "Single user instead of the aggregate");
  heatmap->add_option("--format", format, "Payload body: raster | grid | none");

  int sweep_steps = 0;
  bool full_resolution = false;
  auto* validate = app.add_subcommand("validate", "Score thresholded heatmaps against marked areas");
  validate->add_option("--test", test, "Test id")->required();
  validate->add_option("--image", image, "Image id")->required();
  validate->add_option("--sweep", sweep_steps, "Also sweep N+1 evenly spaced thresholds");
  validate->add_flag("--full-resolution", full_resolution, "Compare at pixel resolution");

  std::string suite_path;
  auto* simulate = app.add_subcommand("simulate", "Ingest scripted synthetic users and score recovery");
  simulate->add_option("suite", suite_path, "Suite file")->required();

  std::string archive;
  auto* exporter = app.add_subcommand("export", "Write a whole test as one archive");
  exporter->add_option("--test", test, "Test id")->required();
  exporter->add_option("--out", archive, "Archive path")->required();

  auto* importer = app.add_subcommand("import", "Load an archive into the data directory");
  importer->add_option("archive", archive, "Archive path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kValidation;
  }

  try {
    if (*serve) return cmd_serve(c, out);
    if (*heatmap) {
      return cmd_heatmap(c, test, image, user.empty() ? std::nullopt : std::optional(user), format, out);
    }
    if (*validate) return cmd_validate(c, test, image, sweep_steps, full_resolution, out);
    if (*simulate) return cmd_simulate(c, suite_path, out);
    if (*exporter) return cmd_export(c, test, archive, out);
    if (*importer) return cmd_import(c, archive, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  }
  return kValidation;
}

}  // namespace dwellmap::cli
