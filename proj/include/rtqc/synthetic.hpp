#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rtqc/video_io.hpp"

namespace rtqc {

/// Content of one chunk of a generated clip. All-zero parameters give a static flat card.
struct ChunkContent {
  /// Horizontal pan of the background gradient, pixels per frame.
  double motion = 0.0;
  /// Amplitude of a fine sinusoidal texture, in code values.
  double detail = 0.0;
  /// Standard deviation of additive Gaussian noise, in code values.
  double noise_sigma = 0.0;
  /// Redraw the noise every frame (hard to predict) instead of once per chunk.
  bool temporal_noise = false;
  int base_level = 128;
};

struct SyntheticClip {
  std::string name;
  int width = 96;
  int height = 64;
  double fps = 25.0;
  std::size_t frames_per_chunk = 8;
  std::vector<ChunkContent> chunks;
  std::uint64_t seed = 0;
};

Video render_clip(const SyntheticClip& clip);

/// Clips cycle through styles (panning gradients, textures, noise fields of varying variance,
/// scene-cut mixtures) so compressibility spans easy to hard both across and within clips.
std::vector<SyntheticClip> default_synthetic_corpus(std::size_t clips, std::size_t chunks_per_clip, int width,
                                                    int height, double fps, std::size_t frames_per_chunk,
                                                    std::uint64_t seed);

/// Writes `<name>.y4m` per clip and returns the probed sources.
std::vector<VideoSource> write_synthetic_corpus(std::span<const SyntheticClip> clips, const std::filesystem::path& dir);

}  // namespace rtqc
