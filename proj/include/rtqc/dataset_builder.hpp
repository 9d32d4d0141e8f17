#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rtqc/encoder_driver.hpp"
#include "rtqc/rd_table.hpp"
#include "rtqc/video_io.hpp"

namespace rtqc {

struct BuildOptions {
  std::size_t frames_per_chunk = 8;
  std::vector<int> qps = all_qps();
  EncoderConfig encoder;
  std::filesystem::path out_dir;
  unsigned parallelism = 1;
};

struct BuildFailure {
  std::string source;
  std::size_t chunk_id = 0;
  int qp = 0;
  std::string message;
};

struct BuildSummary {
  std::vector<RdTable> tables;
  std::size_t encodes_performed = 0;
  std::size_t encodes_skipped = 0;
  std::vector<BuildFailure> failures;
  std::filesystem::path manifest_path;
};

std::filesystem::path table_file_for(const std::filesystem::path& out_dir, const std::string& video_id);

/// Sweeps every chunk of every video over `qps` and persists one JSON-lines table file per video
/// plus `manifest.json`. Entries already present for a chunk with the same content hash are
/// reused. Encoder failures are collected, not thrown.
BuildSummary build_rd_tables(std::span<const VideoSource> corpus, const BuildOptions& options);

/// All tables listed in `dir/manifest.json` (or every `*.rd.jsonl` when no manifest exists).
std::vector<RdTable> load_rd_tables(const std::filesystem::path& dir);

struct TrainingSample {
  std::string chunk_path;
  int width = 0;
  int height = 0;
  double fps = 0.0;
  std::size_t frames = 0;
  int qp_target = 0;
  double lambda_target_db = 0.0;

  bool operator==(const TrainingSample&) const = default;
};

struct TrainingSplit {
  std::vector<TrainingSample> train;
  std::vector<TrainingSample> test;
};

/// One sample per (chunk, measured QP). All rows of a chunk land on the same side.
TrainingSplit emit_training_manifest(std::span<const RdTable> tables, double train_fraction, std::uint64_t seed = 0);

/// Columns: chunk_path,width,height,fps,T,qp_target,lambda_target_db.
void write_training_manifest_csv(const std::filesystem::path& path, std::span<const TrainingSample> samples);
std::vector<TrainingSample> read_training_manifest_csv(const std::filesystem::path& path);

}  // namespace rtqc
