#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "rtqc/encoder_driver.hpp"
#include "rtqc/rd_table.hpp"
#include "rtqc/video_io.hpp"

namespace rtqc::fixture {

class TempDir {
 public:
  TempDir() {
    auto pattern = (std::filesystem::temp_directory_path() / "rtqc-test-XXXXXX").string();
    if (::mkdtemp(pattern.data()) == nullptr) {
      throw std::runtime_error("mkdtemp failed");
    }
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string ffmpeg_path() {
  if (const char* env = std::getenv("RTQC_FFMPEG"); env != nullptr && *env != '\0') {
    return env;
  }
#ifdef RTQC_TEST_FFMPEG
  if (std::filesystem::exists(RTQC_TEST_FFMPEG)) {
    return RTQC_TEST_FFMPEG;
  }
#endif
  try {
    return find_ffmpeg();
  } catch (const std::exception&) {
    return {};
  }
}

#define RTQC_REQUIRE_FFMPEG(var)                        \
  const std::string var = ::rtqc::fixture::ffmpeg_path(); \
  if (var.empty()) GTEST_SKIP() << "no ffmpeg available"

inline VideoMeta small_meta(int w = 16, int h = 16, double fps = 25.0) {
  VideoMeta m;
  m.width = w;
  m.height = h;
  m.fps = fps;
  return m;
}

inline Frame flat_frame(const VideoMeta& m, std::uint8_t y, std::size_t index = 0) {
  Frame f;
  f.index = index;
  f.y_plane.assign(m.luma_bytes(), y);
  f.u_plane.assign(m.chroma_bytes(), 128);
  f.v_plane.assign(m.chroma_bytes(), 128);
  return f;
}

inline Chunk flat_chunk(const VideoMeta& m, std::uint8_t y, std::size_t frames) {
  Chunk c;
  c.meta = m;
  c.frames_per_chunk = frames;
  for (std::size_t i = 0; i < frames; ++i) {
    c.frames.push_back(flat_frame(m, y, i));
  }
  return c;
}

/// psnr(qp) = base - slope * qp with optional noise; bitrate halves every 6 QP.
inline RdTable linear_table(double base, double slope, std::size_t chunk_id = 0, std::string source = "v") {
  RdTable t;
  t.source = std::move(source);
  t.chunk_id = chunk_id;
  t.content_hash = "h" + std::to_string(chunk_id);
  t.width = 16;
  t.height = 16;
  t.fps = 25;
  t.num_frames = 8;
  t.frames_per_chunk = 8;
  for (int qp = kMinQp; qp <= kMaxQp; ++qp) {
    t.entries[qp] = {base - slope * qp, 1e6 * std::pow(2.0, -qp / 6.0), 100};
  }
  return t;
}

inline RdTable random_table(std::mt19937_64& rng, bool inject_violations, std::size_t chunk_id = 0,
                            std::string source = "v") {
  std::uniform_real_distribution<double> base(45.0, 70.0);
  std::uniform_real_distribution<double> slope(0.3, 0.9);
  auto t = linear_table(base(rng), slope(rng), chunk_id, std::move(source));
  std::normal_distribution<double> jitter(0.0, 0.05);
  for (auto& [qp, e] : t.entries) {
    e.chunk_psnr += jitter(rng);
  }
  if (inject_violations) {
    std::uniform_int_distribution<int> pick(1, kMaxQp);
    std::uniform_real_distribution<double> bump(0.5, 4.0);
    for (int k = 0; k < 3; ++k) {
      const int qp = pick(rng);
      t.entries[qp].chunk_psnr = t.entries[qp - 1].chunk_psnr + bump(rng);
    }
  }
  return t;
}

}  // namespace rtqc::fixture
