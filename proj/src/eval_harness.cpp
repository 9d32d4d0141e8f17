#include "rtqc/eval_harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "rtqc/csv.hpp"
#include "rtqc/error.hpp"
#include "rtqc/metrics.hpp"

namespace rtqc {

namespace fs = std::filesystem;

namespace {

double percentile(std::vector<double> v, double p) {
  if (v.empty()) {
    return 0.0;
  }
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double number_from(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

const TargetSchedule& schedule_for(std::span<const TargetSchedule> schedules, std::size_t stream) {
  if (schedules.empty()) {
    throw InvalidArgumentError("no target schedule given");
  }
  return schedules.size() == 1 ? schedules[0] : schedules[stream];
}

void check_schedules(std::span<const TargetSchedule> schedules, std::size_t streams) {
  if (schedules.size() != 1 && schedules.size() != streams) {
    throw InvalidArgumentError("need one schedule, or one per stream (" + std::to_string(streams) + ")");
  }
}

nlohmann::json schedules_json(std::span<const TargetSchedule> schedules, std::span<const Stream> streams) {
  if (schedules.size() == 1) {
    return schedules[0].to_json();
  }
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < streams.size(); ++i) {
    j[streams[i].source.id] = schedules[i].to_json();
  }
  return j;
}

nlohmann::json base_config(std::span<const Stream> streams, std::span<const TargetSchedule> schedules,
                           const ExperimentOptions& options) {
  nlohmann::json sources = nlohmann::json::array();
  for (const auto& s : streams) {
    sources.push_back({{"id", s.source.id}, {"path", s.source.path.string()}, {"chunks", s.chunks.size()}});
  }
  nlohmann::json cfg{{"tables_dir", options.tables_dir.string()},
                     {"frames_per_chunk", options.build.frames_per_chunk},
                     {"schedule", schedules_json(schedules, streams)},
                     {"corpus", std::move(sources)},
                     {"psnr", {{"plane", "luma"}, {"pooling", "mean of per-frame"}, {"cap_db", kPsnrCapDb}}},
                     {"latency", "wall clock around the controller decision only"}};
  const auto manifest = options.tables_dir / "manifest.json";
  if (!options.tables_dir.empty() && fs::exists(manifest)) {
    std::ifstream in(manifest);
    try {
      const auto m = nlohmann::json::parse(in);
      cfg["encoder"] = m.value("encoder", nlohmann::json::object());
      cfg["encoder_version"] = m.value("encoder_version", "unknown");
      cfg["gop"] = m.value("gop", "");
    } catch (const nlohmann::json::exception&) {
    }
  }
  return cfg;
}

EvalRecord finish_record(EvalRecord r, const RdTable& table) {
  const auto oracle = oracle_select(table, r.lambda_db);
  r.b_opt = table.at(oracle.qp_final).bitrate;
  r.nonconformable = oracle.nonconformable;
  r.conforms = ConformanceVerdict::judge(r.chunk_psnr, r.lambda_db).conforms;
  r.bw_eff = bandwidth_efficiency(r.bitrate, r.b_opt);
  r.short_chunk = table.is_short();
  return r;
}

}  // namespace

nlohmann::json Aggregates::to_json() const {
  return {{"chunks", chunks},
          {"failed", failed},
          {"nonconformable", nonconformable},
          {"nonconformance_prob", nonconformance_prob},
          {"nonconformance_prob_conformable", nonconformance_prob_conformable},
          {"conformance_prob", conformance_prob()},
          {"avg_bitrate", avg_bitrate},
          {"mean_bw_eff", mean_bw_eff},
          {"mean_cv", number_or_null(mean_cv)},
          {"latency_ms", {{"p50", latency.p50_ms}, {"p95", latency.p95_ms}, {"p99", latency.p99_ms}, {"max", latency.max_ms}}}};
}

Aggregates Aggregates::from_json(const nlohmann::json& j) {
  Aggregates a;
  a.chunks = j.at("chunks").get<std::size_t>();
  a.failed = j.at("failed").get<std::size_t>();
  a.nonconformable = j.at("nonconformable").get<std::size_t>();
  a.nonconformance_prob = j.at("nonconformance_prob").get<double>();
  a.nonconformance_prob_conformable = j.at("nonconformance_prob_conformable").get<double>();
  a.avg_bitrate = j.at("avg_bitrate").get<double>();
  a.mean_bw_eff = j.at("mean_bw_eff").get<double>();
  a.mean_cv = number_from(j.at("mean_cv"));
  const auto& l = j.at("latency_ms");
  a.latency = {l.at("p50").get<double>(), l.at("p95").get<double>(), l.at("p99").get<double>(),
               l.at("max").get<double>()};
  return a;
}

Aggregates aggregate(std::span<const EvalRecord> records) {
  Aggregates a;
  std::vector<ConformanceVerdict> all;
  std::vector<ConformanceVerdict> reachable;
  std::vector<double> latencies;
  std::map<std::string, std::vector<double>> psnr_by_source;
  double bitrate_sum = 0.0;
  double eff_sum = 0.0;
  for (const auto& r : records) {
    if (r.failed) {
      ++a.failed;
      continue;
    }
    ++a.chunks;
    const auto v = ConformanceVerdict::judge(r.chunk_psnr, r.lambda_db);
    all.push_back(v);
    if (r.nonconformable) {
      ++a.nonconformable;
    } else {
      reachable.push_back(v);
    }
    bitrate_sum += r.bitrate;
    eff_sum += r.bw_eff;
    latencies.push_back(r.decision_latency_ms);
    psnr_by_source[r.source].push_back(r.chunk_psnr);
  }
  if (a.chunks == 0) {
    a.mean_cv = std::numeric_limits<double>::quiet_NaN();
    return a;
  }
  a.nonconformance_prob = nonconformance_probability(all);
  a.nonconformance_prob_conformable = reachable.empty() ? 0.0 : nonconformance_probability(reachable);
  a.avg_bitrate = bitrate_sum / static_cast<double>(a.chunks);
  a.mean_bw_eff = eff_sum / static_cast<double>(a.chunks);
  double cv_sum = 0.0;
  std::size_t cv_n = 0;
  for (const auto& [src, values] : psnr_by_source) {
    if (values.size() >= 2) {
      cv_sum += coefficient_of_variation(values);
      ++cv_n;
    }
  }
  a.mean_cv = cv_n == 0 ? std::numeric_limits<double>::quiet_NaN() : cv_sum / static_cast<double>(cv_n);
  a.latency = {percentile(latencies, 50), percentile(latencies, 95), percentile(latencies, 99),
               *std::max_element(latencies.begin(), latencies.end())};
  return a;
}

std::vector<Stream> prepare_streams(std::span<const VideoSource> corpus, const ExperimentOptions& options) {
  if (corpus.empty()) {
    throw InvalidArgumentError("empty corpus");
  }
  auto index_tables = [&] {
    std::map<std::pair<std::string, std::size_t>, RdTable> index;
    if (fs::is_directory(options.tables_dir)) {
      for (auto& t : load_rd_tables(options.tables_dir)) {
        auto key = std::make_pair(t.source, t.chunk_id);
        index.insert_or_assign(std::move(key), std::move(t));
      }
    }
    return index;
  };
  std::vector<Stream> streams;
  for (const auto& src : corpus) {
    Stream s;
    s.source = src;
    const auto video = load_video(src);
    s.chunks = chunkify(video.frames, video.meta, options.build.frames_per_chunk);
    streams.push_back(std::move(s));
  }

  // Chunks whose encodes failed during the build keep their partial table and are reported failed.
  std::set<std::pair<std::string, std::size_t>> failed_chunks;
  auto attach = [&](bool final_attempt) {
    auto index = index_tables();
    bool ok = true;
    for (auto& s : streams) {
      s.tables.clear();
      for (const auto& c : s.chunks) {
        const auto it = index.find({s.source.id, c.chunk_id});
        const bool matches = it != index.end() && it->second.content_hash == content_hash(c) &&
                             it->second.frames_per_chunk == options.build.frames_per_chunk;
        const bool usable = matches && (it->second.complete() || failed_chunks.contains({s.source.id, c.chunk_id}));
        if (!usable) {
          if (final_attempt) {
            throw MissingTableError("no complete RdTable for " + s.source.id + " chunk " + std::to_string(c.chunk_id) +
                                    " in " + options.tables_dir.string());
          }
          ok = false;
          break;
        }
        s.tables.push_back(it->second);
      }
      if (!ok) {
        break;
      }
    }
    return ok;
  };

  if (!attach(!options.build_missing)) {
    BuildOptions build = options.build;
    build.out_dir = options.tables_dir;
    build.qps = all_qps();
    for (const auto& f : build_rd_tables(corpus, build).failures) {
      failed_chunks.insert({f.source, f.chunk_id});
    }
    attach(true);
  }
  return streams;
}

EvalReport run_experiment(std::span<const Stream> streams, const ControllerSpec& spec,
                          std::span<const TargetSchedule> schedules, const ExperimentOptions& options) {
  check_schedules(schedules, streams.size());
  auto controller = make_controller(spec);
  EvalReport report;
  for (std::size_t si = 0; si < streams.size(); ++si) {
    const auto& stream = streams[si];
    const auto& schedule = schedule_for(schedules, si);
    controller->reset();
    for (std::size_t ci = 0; ci < stream.chunks.size(); ++ci) {
      const auto& chunk = stream.chunks[ci];
      const auto& table = stream.tables.at(ci);
      EvalRecord r;
      r.source = stream.source.id;
      r.chunk_id = chunk.chunk_id;
      r.controller_id = controller->id();
      r.lambda_db = schedule.lambda_at(ci);
      if (!table.complete()) {
        r.failed = true;
        r.short_chunk = chunk.is_short();
        report.records.push_back(std::move(r));
        continue;
      }

      const auto start = std::chrono::steady_clock::now();
      const auto decision = controller->decide({chunk, table, r.lambda_db});
      const auto stop = std::chrono::steady_clock::now();
      r.decision_latency_ms = std::chrono::duration<double, std::milli>(stop - start).count();
      r.qp_raw = decision.qp_raw;
      r.qp_final = decision.qp_final;
      r.fallback = decision.fallback;

      const auto& e = table.at(decision.qp_final);
      r.chunk_psnr = e.chunk_psnr;
      r.bitrate = e.bitrate;
      report.records.push_back(finish_record(std::move(r), table));
      controller->observe(decision, report.records.back().chunk_psnr);
    }
  }
  report.aggregates = aggregate(report.records);
  report.config = base_config(streams, schedules, options);
  report.config["controller"] = spec.to_json();
  return report;
}

EvalReport run_experiment(std::span<const VideoSource> corpus, const ControllerSpec& spec,
                          const TargetSchedule& schedule, const ExperimentOptions& options) {
  const auto streams = prepare_streams(corpus, options);
  return run_experiment(streams, spec, std::span<const TargetSchedule>(&schedule, 1), options);
}

EvalReport run_dash_experiment(std::span<const Stream> streams, const DashLadder& ladder,
                               std::span<const TargetSchedule> schedules, const ExperimentOptions& options) {
  check_schedules(schedules, streams.size());
  ladder.validate();
  std::vector<RungMatrix> matrices;
  for (const auto& s : streams) {
    matrices.push_back(ladder.has_scaled_levels() ? measure_rungs(s.chunks, s.tables, ladder, options.build.encoder)
                                                  : rung_matrix_from_tables(s.tables, ladder));
  }
  if (ladder.levels.size() > 1) {
    check_ladder_order(matrices, ladder);
  }
  const std::string id = std::string("dash/") + (ladder.causal ? "causal" : "lookahead") +
                         std::to_string(ladder.lookahead_chunks);
  EvalReport report;
  for (std::size_t si = 0; si < streams.size(); ++si) {
    const auto& stream = streams[si];
    const auto trace = run_dash(matrices[si], ladder, schedule_for(schedules, si));
    for (const auto& d : trace) {
      const auto& level = ladder.levels[d.level_index];
      EvalRecord r;
      r.source = stream.source.id;
      r.chunk_id = stream.chunks[d.chunk_index].chunk_id;
      r.controller_id = id;
      r.level = level.name;
      r.lambda_db = d.lambda_db;
      r.qp_raw = level.qp;
      r.qp_final = level.qp;
      r.chunk_psnr = d.chunk_psnr;
      r.bitrate = d.bitrate;
      report.records.push_back(finish_record(std::move(r), stream.tables[d.chunk_index]));
    }
  }
  report.aggregates = aggregate(report.records);
  report.config = base_config(streams, schedules, options);
  report.config["controller"] = {{"id", id}, {"kind", "dash"}, {"ladder", ladder.to_json()}};
  return report;
}

std::vector<CurvePoint> sweep_lambda(std::span<const Stream> streams, const ControllerSpec& spec,
                                     std::span<const double> lambdas, const ExperimentOptions& options) {
  std::vector<CurvePoint> curve;
  for (double l : lambdas) {
    const auto sched = TargetSchedule::constant(l);
    curve.push_back({l, run_experiment(streams, spec, std::span<const TargetSchedule>(&sched, 1), options).aggregates});
  }
  return curve;
}

std::vector<CurvePoint> sweep_lambda_dash(std::span<const Stream> streams, const DashLadder& ladder,
                                          std::span<const double> lambdas, const ExperimentOptions& options) {
  std::vector<CurvePoint> curve;
  for (double l : lambdas) {
    const auto sched = TargetSchedule::constant(l);
    curve.push_back(
        {l, run_dash_experiment(streams, ladder, std::span<const TargetSchedule>(&sched, 1), options).aggregates});
  }
  return curve;
}

void write_curve_csv(const fs::path& path, std::span<const CurvePoint> curve) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << "lambda_db,avg_bitrate,nonconformance_prob,nonconformance_prob_conformable,mean_bw_eff\n";
  for (const auto& p : curve) {
    out << csv::join_line({csv::format_double(p.lambda_db), csv::format_double(p.aggregates.avg_bitrate),
                           csv::format_double(p.aggregates.nonconformance_prob),
                           csv::format_double(p.aggregates.nonconformance_prob_conformable),
                           csv::format_double(p.aggregates.mean_bw_eff)})
        << '\n';
  }
}

void write_curve_dat(const fs::path& path, std::span<const CurvePoint> curve) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << "# lambda_db avg_bitrate nonconformance_prob nonconformance_prob_conformable mean_bw_eff\n";
  for (const auto& p : curve) {
    out << csv::format_double(p.lambda_db) << ' ' << csv::format_double(p.aggregates.avg_bitrate) << ' '
        << csv::format_double(p.aggregates.nonconformance_prob) << ' '
        << csv::format_double(p.aggregates.nonconformance_prob_conformable) << ' '
        << csv::format_double(p.aggregates.mean_bw_eff) << '\n';
  }
}

std::vector<CurvePoint> read_curve_csv(const fs::path& path) {
  const auto t = csv::read_file(path);
  std::vector<CurvePoint> out;
  for (const auto& row : t.rows) {
    CurvePoint p;
    p.lambda_db = csv::parse_double(row[t.column("lambda_db")]);
    p.aggregates.avg_bitrate = csv::parse_double(row[t.column("avg_bitrate")]);
    p.aggregates.nonconformance_prob = csv::parse_double(row[t.column("nonconformance_prob")]);
    p.aggregates.nonconformance_prob_conformable =
        csv::parse_double(row[t.column("nonconformance_prob_conformable")]);
    p.aggregates.mean_bw_eff = csv::parse_double(row[t.column("mean_bw_eff")]);
    out.push_back(p);
  }
  return out;
}

namespace {

const std::vector<std::string> kRecordColumns{
    "source",     "chunk_id",  "controller_id", "level",          "lambda_db",   "qp_raw",
    "qp_final",   "chunk_psnr", "bitrate",      "b_opt",          "conforms",    "nonconformable",
    "short_chunk", "fallback", "failed",        "bw_eff",         "decision_latency_ms"};

}  // namespace

void write_records_csv(const fs::path& path, std::span<const EvalRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << csv::join_line(kRecordColumns) << '\n';
  auto b = [](bool v) { return std::string(v ? "1" : "0"); };
  for (const auto& r : records) {
    out << csv::join_line({r.source, std::to_string(r.chunk_id), r.controller_id, r.level,
                           csv::format_double(r.lambda_db), std::to_string(r.qp_raw), std::to_string(r.qp_final),
                           csv::format_double(r.chunk_psnr), csv::format_double(r.bitrate),
                           csv::format_double(r.b_opt), b(r.conforms), b(r.nonconformable), b(r.short_chunk),
                           b(r.fallback), b(r.failed), csv::format_double(r.bw_eff),
                           csv::format_double(r.decision_latency_ms)})
        << '\n';
  }
  if (!out) {
    throw IoError("short write to " + path.string());
  }
}

std::vector<EvalRecord> read_records_csv(const fs::path& path) {
  const auto t = csv::read_file(path);
  std::vector<std::size_t> col;
  for (const auto& name : kRecordColumns) {
    col.push_back(t.column(name));
  }
  std::vector<EvalRecord> out;
  for (const auto& row : t.rows) {
    EvalRecord r;
    std::size_t k = 0;
    r.source = row[col[k++]];
    r.chunk_id = static_cast<std::size_t>(csv::parse_int(row[col[k++]]));
    r.controller_id = row[col[k++]];
    r.level = row[col[k++]];
    r.lambda_db = csv::parse_double(row[col[k++]]);
    r.qp_raw = static_cast<int>(csv::parse_int(row[col[k++]]));
    r.qp_final = static_cast<int>(csv::parse_int(row[col[k++]]));
    r.chunk_psnr = csv::parse_double(row[col[k++]]);
    r.bitrate = csv::parse_double(row[col[k++]]);
    r.b_opt = csv::parse_double(row[col[k++]]);
    r.conforms = csv::parse_bool(row[col[k++]]);
    r.nonconformable = csv::parse_bool(row[col[k++]]);
    r.short_chunk = csv::parse_bool(row[col[k++]]);
    r.fallback = csv::parse_bool(row[col[k++]]);
    r.failed = csv::parse_bool(row[col[k++]]);
    r.bw_eff = csv::parse_double(row[col[k++]]);
    r.decision_latency_ms = csv::parse_double(row[col[k++]]);
    out.push_back(std::move(r));
  }
  return out;
}

ReportFiles emit_report(const EvalReport& report, const fs::path& out_dir, bool gnuplot) {
  fs::create_directories(out_dir);
  ReportFiles files;
  files.records_csv = out_dir / "records.csv";
  files.report_json = out_dir / "report.json";
  write_records_csv(files.records_csv, report.records);
  {
    std::ofstream out(files.report_json, std::ios::trunc);
    if (!out) {
      throw IoError("cannot write " + files.report_json.string());
    }
    out << nlohmann::json{{"aggregates", report.aggregates.to_json()}, {"config", report.config}}.dump(2) << '\n';
  }
  if (gnuplot) {
    files.scatter_dat = out_dir / "scatter.dat";
    std::ofstream out(files.scatter_dat, std::ios::trunc);
    if (!out) {
      throw IoError("cannot write " + files.scatter_dat.string());
    }
    const std::string id = report.records.empty() ? std::string("empty") : report.records.front().controller_id;
    out << "# conformance probability vs. bandwidth efficiency\n"
        << "# controller conformance_prob mean_bw_eff\n"
        << '"' << id << "\" " << csv::format_double(report.aggregates.conformance_prob()) << ' '
        << csv::format_double(report.aggregates.mean_bw_eff) << '\n';
  }
  return files;
}

EvalReport read_report(const fs::path& dir) {
  EvalReport r;
  r.records = read_records_csv(dir / "records.csv");
  std::ifstream in(dir / "report.json");
  if (!in) {
    throw IoError("cannot open " + (dir / "report.json").string());
  }
  try {
    const auto j = nlohmann::json::parse(in);
    r.aggregates = Aggregates::from_json(j.at("aggregates"));
    r.config = j.value("config", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw IoError((dir / "report.json").string() + ": " + e.what());
  }
  return r;
}

}  // namespace rtqc
