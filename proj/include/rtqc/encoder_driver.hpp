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

inline constexpr int kMinQp = 0;
inline constexpr int kMaxQp = 51;
inline constexpr int kNumQps = kMaxQp - kMinQp + 1;

void check_qp(int qp);
/// 0..51 inclusive.
std::vector<int> all_qps();

enum class GopMode { kOneGopPerChunk };

/// External encoder/decoder invocation. Templates are split into argv words (see split_command)
/// and then each `{name}` placeholder is substituted; no shell is involved.
///
/// encode placeholders: {input} {output} {qp} {width} {height} {fps} (required), {frames} {extra}.
/// decode placeholders: {input} {output} (required), {width} {height} {fps}.
/// scale placeholders:  {input} {output} {width} {height} {out_width} {out_height} (required), {fps}.
struct EncoderConfig {
  std::string encode_command_template;
  std::string decode_command_template;
  /// Only needed for resolution-scaled ladder rungs.
  std::string scale_command_template;
  /// Optional; its first output line is recorded as the encoder version.
  std::string version_command;
  GopMode gop_mode = GopMode::kOneGopPerChunk;
  std::vector<std::string> extra_flags;
  bool keep_artifacts = false;
  /// Parent of per-invocation scratch directories; empty means the system temp dir.
  std::filesystem::path scratch_root;

  void validate() const;
  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);

  /// FFmpeg + libx264, constant QP, single-threaded, one closed GOP per chunk.
  static EncoderConfig reference(const std::string& ffmpeg_path);
};

/// RTQC_FFMPEG if set, else `ffmpeg` on PATH. Throws ExternalToolError if neither exists.
std::string find_ffmpeg();
/// First line of the version command, or "unknown".
std::string encoder_version(const EncoderConfig& cfg);

struct EncodeResult {
  int qp = 0;
  std::uint64_t encoded_bytes = 0;
  /// 8 * encoded_bytes * fps / num_frames.
  double bitrate = 0.0;
  std::vector<double> frame_psnr;
  double chunk_psnr = 0.0;
};

double bitrate_for(std::uint64_t encoded_bytes, double fps, std::size_t num_frames);

struct EncodedChunk {
  EncodeResult result;
  std::vector<Frame> decoded;
};

/// Encodes at constant QP, decodes, and measures luma PSNR against the source frames.
EncodeResult encode_chunk(const Chunk& chunk, int qp, const EncoderConfig& cfg);
EncodedChunk encode_and_decode(const Chunk& chunk, int qp, const EncoderConfig& cfg);
/// Downscales by `scale_divisor`, encodes and decodes at the reduced size, upscales back, and
/// compares against the original. Bitrate comes from the reduced-size stream.
EncodedChunk encode_and_decode_scaled(const Chunk& chunk, int qp, int scale_divisor, const EncoderConfig& cfg);

/// One independent encode per QP, in the order given. Throws SweepError naming the failing QP.
std::vector<EncodeResult> sweep_chunk(const Chunk& chunk, std::span<const int> qps, const EncoderConfig& cfg);

/// Expands a template for testing and diagnostics.
std::vector<std::string> expand_template(const std::string& tmpl, const std::map<std::string, std::string>& values,
                                         std::span<const std::string> extra = {});

}  // namespace rtqc
