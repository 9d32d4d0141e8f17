#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace rtqc {

enum class PixelFormat { kYuv420p8 };

struct VideoMeta {
  int width = 0;
  int height = 0;
  double fps = 0.0;
  PixelFormat pixel_format = PixelFormat::kYuv420p8;
  std::size_t frame_count = 0;

  std::size_t luma_bytes() const { return static_cast<std::size_t>(width) * height; }
  std::size_t chroma_bytes() const { return luma_bytes() / 4; }
  std::size_t frame_bytes() const { return luma_bytes() * 3 / 2; }

  // Checks geometry only; frame_count == 0 is accepted as "unknown".
  void validate_geometry() const;
  void validate() const;
};

struct Frame {
  std::size_t index = 0;
  std::vector<std::uint8_t> y_plane;
  std::vector<std::uint8_t> u_plane;
  std::vector<std::uint8_t> v_plane;

  static Frame from_packed(std::size_t index, std::span<const std::uint8_t> bytes, const VideoMeta& meta);
  bool matches(const VideoMeta& meta) const;
};

/// A run of consecutive frames encoded and judged as one unit. Immutable once built.
struct Chunk {
  std::size_t chunk_id = 0;
  std::vector<Frame> frames;
  VideoMeta meta;
  std::size_t frames_per_chunk = 0;

  std::size_t num_frames() const { return frames.size(); }
  bool is_short() const { return frames.size() < frames_per_chunk; }
  /// Concatenated planar yuv420p bytes of every frame, in stream order.
  std::vector<std::uint8_t> packed_bytes() const;
};

struct Video {
  VideoMeta meta;
  std::vector<Frame> frames;
};

/// Raw planar yuv420p. meta.frame_count == 0 means "derive from file size".
std::vector<Frame> load_raw_video(const std::filesystem::path& path, const VideoMeta& meta);
void write_raw_video(const std::filesystem::path& path, std::span<const Frame> frames, const VideoMeta& meta);

Video load_y4m(const std::filesystem::path& path);
void write_y4m(const std::filesystem::path& path, std::span<const Frame> frames, const VideoMeta& meta);

std::vector<Chunk> chunkify(std::span<const Frame> frames, const VideoMeta& meta, std::size_t frames_per_chunk);

/// One video in a corpus: a `.y4m` file or a `.yuv` file with a `.json` sidecar.
struct VideoSource {
  std::string id;
  std::filesystem::path path;
  VideoMeta meta;
};

/// Reads a `.y4m` header or `.yuv` + sidecar (`{"width":..,"height":..,"fps":..}`).
VideoSource probe_video(const std::filesystem::path& path);
Video load_video(const VideoSource& source);
/// Videos in a directory, sorted by id.
std::vector<VideoSource> scan_corpus(const std::filesystem::path& dir);

}  // namespace rtqc
