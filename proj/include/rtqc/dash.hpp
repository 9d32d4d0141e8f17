#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtqc/controllers.hpp"
#include "rtqc/encoder_driver.hpp"
#include "rtqc/rd_table.hpp"

namespace rtqc {

/// One rung of the ladder: a constant-QP encode, optionally at reduced resolution.
struct LadderLevel {
  std::string name;
  int qp = 0;
  /// Resolution divisor; 1 keeps full resolution.
  int scale_factor = 1;

  bool operator==(const LadderLevel&) const = default;
};

/// Levels ordered from lowest to highest bitrate.
struct DashLadder {
  std::vector<LadderLevel> levels;
  std::size_t lookahead_chunks = 100;
  /// Decide from the previous window instead of the upcoming one.
  bool causal = false;

  void validate() const;
  bool has_scaled_levels() const;
  nlohmann::json to_json() const;

  /// CSV `name,qp[,scale_factor]`; a header row is optional.
  static DashLadder from_csv(const std::filesystem::path& path, std::size_t lookahead_chunks = 100);
  /// Five constant-QP rungs 44, 36, 28, 20, 12.
  static DashLadder default_ladder(std::size_t lookahead_chunks = 100);
};

struct RungSample {
  double chunk_psnr = 0.0;
  double bitrate = 0.0;
};

/// samples[chunk][level] for one stream.
using RungMatrix = std::vector<std::vector<RungSample>>;

/// Constant-QP rungs looked up in the stream's tables. Throws MissingTableError on absent data
/// and InvalidArgumentError if a level is resolution-scaled.
RungMatrix rung_matrix_from_tables(std::span<const RdTable> stream_tables, const DashLadder& ladder);
/// Encodes resolution-scaled rungs; constant-QP rungs come from tables when present.
RungMatrix measure_rungs(std::span<const Chunk> chunks, std::span<const RdTable> stream_tables,
                         const DashLadder& ladder, const EncoderConfig& cfg);

/// Lowest level whose mean PSNR over the window reaches lambda; the highest level if none does.
std::size_t dash_select(std::span<const std::vector<RungSample>> window, const DashLadder& ladder, double lambda_db);
std::size_t dash_select(std::span<const RdTable> window, const DashLadder& ladder, double lambda_db);

struct DashChunkRecord {
  std::size_t chunk_index = 0;
  std::size_t level_index = 0;
  std::size_t window_start = 0;
  double lambda_db = 0.0;
  double chunk_psnr = 0.0;
  double bitrate = 0.0;
};

/// Segment-level switching: a decision made at the start of each window of `lookahead_chunks`
/// (cut short at schedule changes and stream end) holds for every chunk in it.
std::vector<DashChunkRecord> run_dash(const RungMatrix& samples, const DashLadder& ladder,
                                      const TargetSchedule& schedule);
std::vector<DashChunkRecord> run_dash(std::span<const RdTable> stream_tables, const DashLadder& ladder,
                                      const TargetSchedule& schedule);

/// Mean bitrate of each level over all chunks of all streams.
std::vector<double> level_mean_bitrates(std::span<const RungMatrix> streams, std::size_t num_levels);
/// Throws InvalidArgumentError unless mean bitrate strictly increases along the ladder.
void check_ladder_order(std::span<const RungMatrix> streams, const DashLadder& ladder);

}  // namespace rtqc
