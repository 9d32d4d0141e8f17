#include "rtqc/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "rtqc/error.hpp"

namespace rtqc {

namespace fs = std::filesystem;

namespace {

std::uint8_t clamp_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

// Background: two-axis gradient panning horizontally.
double background(int x, int y, int w, int h, double shift, int base) {
  const double fx = (x + shift) / w;
  const double fy = static_cast<double>(y) / h;
  return base + 50.0 * std::sin(2.0 * std::numbers::pi * fx) + 30.0 * (fy - 0.5);
}

double texture(int x, int y, double shift, double amplitude) {
  if (amplitude == 0.0) {
    return 0.0;
  }
  return amplitude * std::sin(0.9 * (x + 0.5 * shift)) * std::cos(0.7 * y + 0.15 * shift);
}

}  // namespace

Video render_clip(const SyntheticClip& clip) {
  if (clip.chunks.empty() || clip.frames_per_chunk < 1) {
    throw InvalidArgumentError("synthetic clip needs at least one chunk of at least one frame");
  }
  Video video;
  video.meta.width = clip.width;
  video.meta.height = clip.height;
  video.meta.fps = clip.fps;
  video.meta.frame_count = clip.chunks.size() * clip.frames_per_chunk;
  video.meta.validate();

  const int w = clip.width;
  const int h = clip.height;
  std::mt19937_64 rng(clip.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> static_noise(static_cast<std::size_t>(w) * h);

  std::size_t frame_index = 0;
  double shift = 0.0;
  for (std::size_t c = 0; c < clip.chunks.size(); ++c) {
    const ChunkContent& content = clip.chunks[c];
    for (auto& n : static_noise) {
      n = gauss(rng);
    }
    for (std::size_t t = 0; t < clip.frames_per_chunk; ++t, ++frame_index) {
      Frame f;
      f.index = frame_index;
      f.y_plane.resize(video.meta.luma_bytes());
      f.u_plane.resize(video.meta.chroma_bytes());
      f.v_plane.resize(video.meta.chroma_bytes());
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * w + x;
          double v = background(x, y, w, h, shift, content.base_level) + texture(x, y, shift, content.detail);
          if (content.noise_sigma > 0.0) {
            v += content.noise_sigma * (content.temporal_noise ? gauss(rng) : static_noise[i]);
          }
          f.y_plane[i] = clamp_u8(v);
        }
      }
      for (int y = 0; y < h / 2; ++y) {
        for (int x = 0; x < w / 2; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * (w / 2) + x;
          f.u_plane[i] = clamp_u8(128.0 + 20.0 * std::cos(2.0 * std::numbers::pi * (2.0 * x + shift) / w));
          f.v_plane[i] = clamp_u8(128.0 + 20.0 * std::sin(2.0 * std::numbers::pi * 2.0 * y / h));
        }
      }
      video.frames.push_back(std::move(f));
      shift += content.motion;
    }
  }
  return video;
}

std::vector<SyntheticClip> default_synthetic_corpus(std::size_t clips, std::size_t chunks_per_clip, int width,
                                                    int height, double fps, std::size_t frames_per_chunk,
                                                    std::uint64_t seed) {
  std::vector<SyntheticClip> out;
  for (std::size_t k = 0; k < clips; ++k) {
    SyntheticClip clip;
    clip.name = "synth_" + std::to_string(k);
    clip.width = width;
    clip.height = height;
    clip.fps = fps;
    clip.frames_per_chunk = frames_per_chunk;
    clip.seed = seed * 1000003ULL + k;
    std::mt19937_64 rng(clip.seed ^ 0x9e3779b97f4a7c15ULL);
    auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    for (std::size_t c = 0; c < chunks_per_clip; ++c) {
      ChunkContent cc;
      switch (k % 4) {
        case 0:  // panning gradient with light texture
          cc.motion = uni(0.5, 4.0);
          cc.detail = uni(2.0, 12.0);
          cc.noise_sigma = uni(0.5, 3.0);
          break;
        case 1:  // texture of varying strength
          cc.motion = uni(0.0, 2.0);
          cc.detail = uni(10.0, 45.0);
          cc.noise_sigma = uni(1.0, 4.0);
          break;
        case 2:  // noise fields of varying variance
          cc.motion = uni(0.0, 1.0);
          cc.detail = uni(0.0, 6.0);
          cc.noise_sigma = uni(2.0, 14.0);
          cc.temporal_noise = true;
          break;
        default:  // scene cuts between cards, gradients and noise
          switch (static_cast<int>(uni(0.0, 3.0))) {
            case 0:
              cc.base_level = static_cast<int>(uni(60.0, 190.0));
              cc.noise_sigma = uni(0.0, 1.0);
              break;
            case 1:
              cc.motion = uni(1.0, 5.0);
              cc.detail = uni(5.0, 25.0);
              cc.noise_sigma = uni(0.5, 2.0);
              break;
            default:
              cc.detail = uni(0.0, 10.0);
              cc.noise_sigma = uni(4.0, 12.0);
              cc.temporal_noise = true;
              break;
          }
          break;
      }
      clip.chunks.push_back(cc);
    }
    out.push_back(std::move(clip));
  }
  return out;
}

std::vector<VideoSource> write_synthetic_corpus(std::span<const SyntheticClip> clips, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<VideoSource> sources;
  for (const auto& clip : clips) {
    const auto video = render_clip(clip);
    const auto path = dir / (clip.name + ".y4m");
    write_y4m(path, video.frames, video.meta);
    sources.push_back(probe_video(path));
  }
  return sources;
}

}  // namespace rtqc
