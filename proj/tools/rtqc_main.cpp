// rtqc: build rate-distortion tables, run QP controllers against them, report.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rtqc/dash.hpp"
#include "rtqc/dataset_builder.hpp"
#include "rtqc/error.hpp"
#include "rtqc/eval_harness.hpp"
#include "rtqc/synthetic.hpp"

namespace fs = std::filesystem;
using namespace rtqc;

namespace {

struct EncoderArgs {
  std::string config_path;
  std::string ffmpeg;
  bool keep_artifacts = false;
  std::string scratch;
};

void add_encoder_args(CLI::App* cmd, EncoderArgs& a) {
  cmd->add_option("--encoder-config", a.config_path, "JSON encoder configuration (templates)");
  cmd->add_option("--ffmpeg", a.ffmpeg, "ffmpeg binary for the reference configuration");
  cmd->add_flag("--keep-artifacts", a.keep_artifacts, "keep per-encode scratch directories");
  cmd->add_option("--scratch", a.scratch, "parent directory for scratch files");
}

EncoderConfig make_encoder(const EncoderArgs& a) {
  EncoderConfig cfg;
  if (!a.config_path.empty()) {
    std::ifstream in(a.config_path);
    if (!in) {
      throw IoError("cannot open " + a.config_path);
    }
    cfg = EncoderConfig::from_json(nlohmann::json::parse(in));
  } else {
    cfg = EncoderConfig::reference(a.ffmpeg.empty() ? find_ffmpeg() : a.ffmpeg);
  }
  cfg.keep_artifacts = cfg.keep_artifacts || a.keep_artifacts;
  if (!a.scratch.empty()) {
    cfg.scratch_root = a.scratch;
  }
  cfg.validate();
  return cfg;
}

struct TargetArgs {
  double lambda = 0.0;
  std::string schedule;
};

void add_target_args(CLI::App* cmd, TargetArgs& t) {
  auto* l = cmd->add_option("--lambda", t.lambda, "constant PSNR target in dB");
  auto* s = cmd->add_option("--schedule", t.schedule, "CSV start_chunk,lambda_db")->check(CLI::ExistingFile);
  l->excludes(s);
}

TargetSchedule make_schedule(const TargetArgs& t) {
  if (!t.schedule.empty()) {
    return TargetSchedule::from_csv(t.schedule);
  }
  if (t.lambda <= 0.0) {
    throw InvalidArgumentError("give --lambda or --schedule");
  }
  return TargetSchedule::constant(t.lambda);
}

std::vector<double> parse_lambdas(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (const auto colon = item.find(':'); colon != std::string::npos) {
      // lo:hi:step
      const auto second = item.find(':', colon + 1);
      if (second == std::string::npos) {
        throw InvalidArgumentError("lambda range is lo:hi:step");
      }
      const double lo = std::stod(item.substr(0, colon));
      const double hi = std::stod(item.substr(colon + 1, second - colon - 1));
      const double step = std::stod(item.substr(second + 1));
      if (step <= 0) {
        throw InvalidArgumentError("lambda step must be positive");
      }
      for (double v = lo; v <= hi + 1e-9; v += step) {
        out.push_back(v);
      }
    } else if (!item.empty()) {
      out.push_back(std::stod(item));
    }
  }
  if (out.empty()) {
    throw InvalidArgumentError("no lambda values");
  }
  return out;
}

void print_aggregates(const std::string& id, const Aggregates& a) {
  std::cout << id << ": chunks=" << a.chunks << " failed=" << a.failed << " nonconformable=" << a.nonconformable
            << " P_nc=" << a.nonconformance_prob << " P_nc(conformable)=" << a.nonconformance_prob_conformable
            << " avg_bitrate=" << a.avg_bitrate << " mean_bw_eff=" << a.mean_bw_eff << " mean_cv=" << a.mean_cv
            << " latency_p50_ms=" << a.latency.p50_ms << " p95=" << a.latency.p95_ms << " p99=" << a.latency.p99_ms
            << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chunked constant-QP rate control harness"};
  app.require_subcommand(1);

  std::string corpus_dir;
  std::string tables_dir;
  std::string out;
  std::size_t frames_per_chunk = 8;
  unsigned parallelism = 1;
  EncoderArgs enc;
  TargetArgs target;

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "write a synthetic y4m corpus");
  std::size_t clips = 4;
  std::size_t chunks_per_clip = 12;
  int width = 96;
  int height = 64;
  double fps = 25.0;
  std::uint64_t seed = 1;
  gen->add_option("--out", out, "output directory")->required();
  gen->add_option("--clips", clips);
  gen->add_option("--chunks", chunks_per_clip, "chunks per clip");
  gen->add_option("--width", width);
  gen->add_option("--height", height);
  gen->add_option("--fps", fps);
  gen->add_option("-T,--frames-per-chunk", frames_per_chunk);
  gen->add_option("--seed", seed);

  // build-tables
  auto* build = app.add_subcommand("build-tables", "measure PSNR and bitrate at every QP for every chunk");
  build->add_option("--corpus", corpus_dir)->required()->check(CLI::ExistingDirectory);
  build->add_option("--tables", tables_dir, "output directory")->required();
  build->add_option("-T,--frames-per-chunk", frames_per_chunk);
  build->add_option("-j,--parallelism", parallelism);
  add_encoder_args(build, enc);

  // training-manifest
  auto* manifest = app.add_subcommand("training-manifest", "emit (chunk, qp, lambda) training rows");
  double train_fraction = 0.8;
  manifest->add_option("--tables", tables_dir)->required()->check(CLI::ExistingDirectory);
  manifest->add_option("--out", out, "output directory for train.csv and test.csv")->required();
  manifest->add_option("--train-fraction", train_fraction)->check(CLI::Range(0.0, 1.0));
  manifest->add_option("--seed", seed);

  // run
  auto* run = app.add_subcommand("run", "evaluate one QP controller");
  std::string controller = "oracle";
  int decrement = 1;
  std::string predictor;
  std::string fallback = "abort";
  int timeout_ms = 2000;
  bool no_build = false;
  bool gnuplot = true;
  run->add_option("--corpus", corpus_dir)->required()->check(CLI::ExistingDirectory);
  run->add_option("--tables", tables_dir)->required();
  run->add_option("--controller", controller, "oracle | fixed:N | feedback | learned");
  run->add_option("--decrement", decrement, "QP decrement for feedback and learned")->check(CLI::Range(0, kMaxDecrement));
  run->add_option("--predictor", predictor, "exec:<command> or unix:<socket>");
  run->add_option("--fallback", fallback, "abort | feedback")->check(CLI::IsMember({"abort", "feedback"}));
  run->add_option("--predictor-timeout-ms", timeout_ms);
  run->add_option("--out", out, "report directory")->required();
  run->add_option("-T,--frames-per-chunk", frames_per_chunk);
  run->add_option("-j,--parallelism", parallelism);
  run->add_flag("--no-build", no_build, "fail instead of building missing tables");
  run->add_flag("!--no-gnuplot", gnuplot, "skip scatter.dat");
  add_target_args(run, target);
  add_encoder_args(run, enc);

  // dash
  auto* dash = app.add_subcommand("dash", "evaluate the segment-switching ladder baseline");
  std::string ladder_csv;
  std::size_t lookahead = 100;
  bool causal = false;
  dash->add_option("--corpus", corpus_dir)->required()->check(CLI::ExistingDirectory);
  dash->add_option("--tables", tables_dir)->required();
  dash->add_option("--ladder", ladder_csv, "CSV name,qp[,scale_factor]")->check(CLI::ExistingFile);
  dash->add_option("--lookahead", lookahead, "window length N in chunks");
  dash->add_flag("--causal", causal, "decide from the previous window");
  dash->add_option("--out", out, "report directory")->required();
  dash->add_option("-T,--frames-per-chunk", frames_per_chunk);
  dash->add_flag("--no-build", no_build);
  dash->add_flag("!--no-gnuplot", gnuplot);
  add_target_args(dash, target);
  add_encoder_args(dash, enc);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "trace average bitrate against P_nc over a lambda range");
  std::string lambdas = "30:44:2";
  bool sweep_dash = false;
  sweep->add_option("--corpus", corpus_dir)->required()->check(CLI::ExistingDirectory);
  sweep->add_option("--tables", tables_dir)->required();
  sweep->add_option("--controller", controller);
  sweep->add_option("--decrement", decrement)->check(CLI::Range(0, kMaxDecrement));
  sweep->add_option("--predictor", predictor);
  sweep->add_option("--fallback", fallback)->check(CLI::IsMember({"abort", "feedback"}));
  sweep->add_flag("--dash", sweep_dash, "sweep the ladder baseline instead of a controller");
  sweep->add_option("--ladder", ladder_csv)->check(CLI::ExistingFile);
  sweep->add_option("--lookahead", lookahead);
  sweep->add_flag("--causal", causal);
  sweep->add_option("--lambdas", lambdas, "comma list and/or lo:hi:step ranges");
  sweep->add_option("--out", out, "curve CSV; a .dat twin is written beside it")->required();
  sweep->add_flag("!--no-gnuplot", gnuplot);
  sweep->add_option("-T,--frames-per-chunk", frames_per_chunk);
  sweep->add_flag("--no-build", no_build);
  add_encoder_args(sweep, enc);

  // report
  auto* report = app.add_subcommand("report", "print aggregates of a report directory");
  std::string report_dir;
  report->add_option("dir", report_dir)->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    auto experiment_options = [&] {
      ExperimentOptions o;
      o.tables_dir = tables_dir;
      o.build.frames_per_chunk = frames_per_chunk;
      o.build.parallelism = parallelism;
      o.build.encoder = make_encoder(enc);
      o.build_missing = !no_build;
      return o;
    };
    auto controller_spec = [&] {
      auto s = ControllerSpec::parse(controller);
      s.decrement = (s.kind == ControllerSpec::Kind::kFeedback || s.kind == ControllerSpec::Kind::kLearned) ? decrement : 0;
      s.predictor_endpoint = predictor;
      s.fallback = fallback == "feedback" ? FallbackPolicy::kFeedback : FallbackPolicy::kAbort;
      s.predictor_timeout = std::chrono::milliseconds(timeout_ms);
      return s;
    };
    auto ladder = [&] {
      auto l = ladder_csv.empty() ? DashLadder::default_ladder(lookahead) : DashLadder::from_csv(ladder_csv, lookahead);
      l.causal = causal;
      return l;
    };

    if (*gen) {
      const auto clip_list = default_synthetic_corpus(clips, chunks_per_clip, width, height, fps, frames_per_chunk, seed);
      const auto sources = write_synthetic_corpus(clip_list, out);
      std::cout << "wrote " << sources.size() << " clips to " << out << '\n';
    } else if (*build) {
      BuildOptions o;
      o.frames_per_chunk = frames_per_chunk;
      o.parallelism = parallelism;
      o.encoder = make_encoder(enc);
      o.out_dir = tables_dir;
      const auto corpus = scan_corpus(corpus_dir);
      const auto summary = build_rd_tables(corpus, o);
      std::cout << "tables=" << summary.tables.size() << " encodes=" << summary.encodes_performed
                << " reused=" << summary.encodes_skipped << " failures=" << summary.failures.size() << '\n';
      for (const auto& f : summary.failures) {
        std::cerr << "  " << f.source << " chunk " << f.chunk_id << " qp " << f.qp << ": " << f.message << '\n';
      }
      return summary.failures.empty() ? 0 : 1;
    } else if (*manifest) {
      const auto tables = load_rd_tables(tables_dir);
      const auto split = emit_training_manifest(tables, train_fraction, seed);
      fs::create_directories(out);
      write_training_manifest_csv(fs::path(out) / "train.csv", split.train);
      write_training_manifest_csv(fs::path(out) / "test.csv", split.test);
      std::cout << "train=" << split.train.size() << " test=" << split.test.size() << '\n';
    } else if (*run) {
      const auto opts = experiment_options();
      const auto corpus = scan_corpus(corpus_dir);
      const auto streams = prepare_streams(corpus, opts);
      const auto schedule = make_schedule(target);
      const auto r = run_experiment(streams, controller_spec(), std::span<const TargetSchedule>(&schedule, 1), opts);
      emit_report(r, out, gnuplot);
      print_aggregates(r.config["controller"]["id"].get<std::string>(), r.aggregates);
    } else if (*dash) {
      const auto opts = experiment_options();
      const auto corpus = scan_corpus(corpus_dir);
      const auto streams = prepare_streams(corpus, opts);
      const auto schedule = make_schedule(target);
      const auto r = run_dash_experiment(streams, ladder(), std::span<const TargetSchedule>(&schedule, 1), opts);
      emit_report(r, out, gnuplot);
      print_aggregates(r.config["controller"]["id"].get<std::string>(), r.aggregates);
    } else if (*sweep) {
      const auto opts = experiment_options();
      const auto corpus = scan_corpus(corpus_dir);
      const auto streams = prepare_streams(corpus, opts);
      const auto values = parse_lambdas(lambdas);
      const auto curve = sweep_dash ? sweep_lambda_dash(streams, ladder(), values, opts)
                                    : sweep_lambda(streams, controller_spec(), values, opts);
      if (const auto parent = fs::path(out).parent_path(); !parent.empty()) {
        fs::create_directories(parent);
      }
      write_curve_csv(out, curve);
      if (gnuplot) {
        write_curve_dat(fs::path(out).replace_extension(".dat"), curve);
      }
      for (const auto& p : curve) {
        print_aggregates("lambda=" + std::to_string(p.lambda_db), p.aggregates);
      }
    } else if (*report) {
      const auto r = read_report(report_dir);
      print_aggregates(r.config.value("controller", nlohmann::json::object()).value("id", "?"), r.aggregates);
    }
  } catch (const Error& e) {
    std::cerr << "rtqc: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "rtqc: unexpected: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
