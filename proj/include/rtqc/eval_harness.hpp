#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtqc/controllers.hpp"
#include "rtqc/dash.hpp"
#include "rtqc/dataset_builder.hpp"

namespace rtqc {

struct EvalRecord {
  std::string source;
  std::size_t chunk_id = 0;
  std::string controller_id;
  /// DASH level name; empty for QP controllers.
  std::string level;
  double lambda_db = 0.0;
  int qp_raw = 0;
  int qp_final = 0;
  double chunk_psnr = 0.0;
  double bitrate = 0.0;
  /// Oracle bitrate for this chunk and lambda.
  double b_opt = 0.0;
  bool conforms = false;
  bool nonconformable = false;
  bool short_chunk = false;
  bool fallback = false;
  bool failed = false;
  double bw_eff = 0.0;
  double decision_latency_ms = 0.0;

  bool operator==(const EvalRecord&) const = default;
};

struct LatencySummary {
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double p99_ms = 0.0;
  double max_ms = 0.0;
};

/// Failed chunks are excluded from every aggregate.
struct Aggregates {
  std::size_t chunks = 0;
  std::size_t failed = 0;
  std::size_t nonconformable = 0;
  double nonconformance_prob = 0.0;
  /// Over chunks whose lambda is reachable at some QP.
  double nonconformance_prob_conformable = 0.0;
  double avg_bitrate = 0.0;
  double mean_bw_eff = 0.0;
  /// Mean over sources of the PSNR coefficient of variation across each source's chunks; NaN
  /// when no source has two usable chunks.
  double mean_cv = 0.0;
  LatencySummary latency;

  double conformance_prob() const { return 1.0 - nonconformance_prob; }
  nlohmann::json to_json() const;
  static Aggregates from_json(const nlohmann::json& j);
};

Aggregates aggregate(std::span<const EvalRecord> records);

struct EvalReport {
  std::vector<EvalRecord> records;
  Aggregates aggregates;
  nlohmann::json config;
};

struct ExperimentOptions {
  std::filesystem::path tables_dir;
  /// Used when tables are missing or stale; `out_dir` is replaced by `tables_dir`.
  BuildOptions build;
  bool build_missing = true;
};

/// A video with its chunks and one RdTable per chunk. A table is incomplete only when encodes of that
/// chunk failed; such chunks are recorded as failed.
struct Stream {
  VideoSource source;
  std::vector<Chunk> chunks;
  std::vector<RdTable> tables;
};

/// Loads videos and matches every chunk to a complete table by (source, chunk, content hash),
/// building tables when allowed. Throws MissingTableError otherwise.
std::vector<Stream> prepare_streams(std::span<const VideoSource> corpus, const ExperimentOptions& options);

/// `schedules` holds one schedule shared by all streams, or one per stream.
EvalReport run_experiment(std::span<const Stream> streams, const ControllerSpec& spec,
                          std::span<const TargetSchedule> schedules, const ExperimentOptions& options);
EvalReport run_experiment(std::span<const VideoSource> corpus, const ControllerSpec& spec,
                          const TargetSchedule& schedule, const ExperimentOptions& options);

EvalReport run_dash_experiment(std::span<const Stream> streams, const DashLadder& ladder,
                               std::span<const TargetSchedule> schedules, const ExperimentOptions& options);

struct CurvePoint {
  double lambda_db = 0.0;
  Aggregates aggregates;
};

std::vector<CurvePoint> sweep_lambda(std::span<const Stream> streams, const ControllerSpec& spec,
                                     std::span<const double> lambdas, const ExperimentOptions& options);
std::vector<CurvePoint> sweep_lambda_dash(std::span<const Stream> streams, const DashLadder& ladder,
                                          std::span<const double> lambdas, const ExperimentOptions& options);

/// Plot-ready: lambda_db,avg_bitrate,nonconformance_prob,nonconformance_prob_conformable,mean_bw_eff.
void write_curve_csv(const std::filesystem::path& path, std::span<const CurvePoint> curve);
std::vector<CurvePoint> read_curve_csv(const std::filesystem::path& path);
/// Same columns, whitespace separated, for gnuplot.
void write_curve_dat(const std::filesystem::path& path, std::span<const CurvePoint> curve);

struct ReportFiles {
  std::filesystem::path records_csv;
  std::filesystem::path report_json;
  std::filesystem::path scatter_dat;
};

/// records.csv, report.json (aggregates + config) and, when `gnuplot` is set, scatter.dat with
/// one "conformance_prob mean_bw_eff" point.
ReportFiles emit_report(const EvalReport& report, const std::filesystem::path& out_dir, bool gnuplot = true);
void write_records_csv(const std::filesystem::path& path, std::span<const EvalRecord> records);
std::vector<EvalRecord> read_records_csv(const std::filesystem::path& path);
EvalReport read_report(const std::filesystem::path& dir);

}  // namespace rtqc
