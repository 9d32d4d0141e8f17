#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtqc/video_io.hpp"

namespace rtqc {

struct RdEntry {
  double chunk_psnr = 0.0;
  double bitrate = 0.0;
  std::uint64_t encoded_bytes = 0;

  bool operator==(const RdEntry&) const = default;
};

/// Measured QP -> (PSNR, bitrate) surface of one chunk.
struct RdTable {
  std::string source;
  std::size_t chunk_id = 0;
  std::string content_hash;
  /// Raw yuv420p file holding exactly this chunk's frames; may be empty.
  std::string chunk_path;
  int width = 0;
  int height = 0;
  double fps = 0.0;
  std::size_t num_frames = 0;
  std::size_t frames_per_chunk = 0;
  std::map<int, RdEntry> entries;

  bool complete() const;
  bool has(int qp) const { return entries.contains(qp); }
  /// Throws MissingTableError when the QP was not measured.
  const RdEntry& at(int qp) const;
  bool is_short() const { return num_frames < frames_per_chunk; }

  /// Fraction of adjacent measured-QP pairs where PSNR increases with QP.
  double inversion_fraction() const;
  /// True when PSNR is non-increasing in QP across every measured QP in [lo, hi].
  bool monotone_between(int lo, int hi) const;

  nlohmann::json to_json() const;
  static RdTable from_json(const nlohmann::json& j);

  bool operator==(const RdTable&) const = default;
};

/// One JSON object per line.
std::vector<RdTable> read_rd_table_file(const std::filesystem::path& path);
void write_rd_table_file(const std::filesystem::path& path, std::span<const RdTable> tables);

/// Hex SHA-256 of a byte buffer.
std::string content_hash(std::span<const std::uint8_t> bytes);
std::string content_hash(const Chunk& chunk);
std::string file_content_hash(const std::filesystem::path& path);

}  // namespace rtqc
