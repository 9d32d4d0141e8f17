#include "rtqc/video_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rtqc/error.hpp"

namespace rtqc {

namespace fs = std::filesystem;

void VideoMeta::validate_geometry() const {
  if (width <= 0 || height <= 0) {
    throw InvalidArgumentError("video dimensions must be positive, got " + std::to_string(width) + "x" +
                               std::to_string(height));
  }
  if (width % 2 != 0 || height % 2 != 0) {
    throw InvalidArgumentError("yuv420p requires even dimensions, got " + std::to_string(width) + "x" +
                               std::to_string(height));
  }
  if (!(fps > 0.0) || !std::isfinite(fps)) {
    throw InvalidArgumentError("fps must be positive");
  }
}

void VideoMeta::validate() const {
  validate_geometry();
  if (frame_count < 1) {
    throw InvalidArgumentError("frame_count must be at least 1");
  }
}

Frame Frame::from_packed(std::size_t index, std::span<const std::uint8_t> bytes, const VideoMeta& meta) {
  if (bytes.size() != meta.frame_bytes()) {
    throw SizeMismatchError("frame buffer has " + std::to_string(bytes.size()) + " bytes, expected " +
                            std::to_string(meta.frame_bytes()));
  }
  const std::size_t ly = meta.luma_bytes();
  const std::size_t lc = meta.chroma_bytes();
  Frame f;
  f.index = index;
  f.y_plane.assign(bytes.begin(), bytes.begin() + ly);
  f.u_plane.assign(bytes.begin() + ly, bytes.begin() + ly + lc);
  f.v_plane.assign(bytes.begin() + ly + lc, bytes.end());
  return f;
}

bool Frame::matches(const VideoMeta& meta) const {
  return y_plane.size() == meta.luma_bytes() && u_plane.size() == meta.chroma_bytes() &&
         v_plane.size() == meta.chroma_bytes();
}

std::vector<std::uint8_t> Chunk::packed_bytes() const {
  std::vector<std::uint8_t> out;
  out.reserve(frames.size() * meta.frame_bytes());
  for (const auto& f : frames) {
    out.insert(out.end(), f.y_plane.begin(), f.y_plane.end());
    out.insert(out.end(), f.u_plane.begin(), f.u_plane.end());
    out.insert(out.end(), f.v_plane.begin(), f.v_plane.end());
  }
  return out;
}

namespace {

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_frame(std::ostream& out, const Frame& f) {
  out.write(reinterpret_cast<const char*>(f.y_plane.data()), static_cast<std::streamsize>(f.y_plane.size()));
  out.write(reinterpret_cast<const char*>(f.u_plane.data()), static_cast<std::streamsize>(f.u_plane.size()));
  out.write(reinterpret_cast<const char*>(f.v_plane.data()), static_cast<std::streamsize>(f.v_plane.size()));
}

std::string fps_to_y4m(double fps) {
  const double rounded = std::round(fps);
  if (std::abs(fps - rounded) < 1e-9) {
    return std::to_string(static_cast<long long>(rounded)) + ":1";
  }
  const double ntsc = fps * 1001.0;
  if (std::abs(ntsc - std::round(ntsc)) < 1e-6) {
    return std::to_string(static_cast<long long>(std::round(ntsc))) + ":1001";
  }
  return std::to_string(static_cast<long long>(std::round(fps * 1e6))) + ":1000000";
}

struct Y4mHeader {
  VideoMeta meta;
  std::size_t header_size = 0;
};

Y4mHeader parse_y4m_header(const std::vector<std::uint8_t>& data, const fs::path& path) {
  const auto nl = std::find(data.begin(), data.end(), '\n');
  if (nl == data.end()) {
    throw IoError(path.string() + ": missing y4m header line");
  }
  const std::string line(data.begin(), nl);
  std::istringstream ss(line);
  std::string magic;
  ss >> magic;
  if (magic != "YUV4MPEG2") {
    throw IoError(path.string() + ": not a YUV4MPEG2 stream");
  }
  Y4mHeader h;
  h.header_size = static_cast<std::size_t>(nl - data.begin()) + 1;
  std::string tok;
  while (ss >> tok) {
    const char tag = tok[0];
    const std::string val = tok.substr(1);
    switch (tag) {
      case 'W':
        h.meta.width = std::stoi(val);
        break;
      case 'H':
        h.meta.height = std::stoi(val);
        break;
      case 'F': {
        const auto colon = val.find(':');
        if (colon == std::string::npos) {
          throw IoError(path.string() + ": malformed frame rate " + val);
        }
        const double num = std::stod(val.substr(0, colon));
        const double den = std::stod(val.substr(colon + 1));
        if (den == 0.0) {
          throw IoError(path.string() + ": zero frame-rate denominator");
        }
        h.meta.fps = num / den;
        break;
      }
      case 'C':
        if (val.rfind("420", 0) != 0 || val.find("p10") != std::string::npos ||
            val.find("p12") != std::string::npos) {
          throw InvalidArgumentError(path.string() + ": unsupported colorspace C" + val + " (only 8-bit 4:2:0)");
        }
        break;
      default:
        break;  // interlacing, aspect ratio, comments
    }
  }
  return h;
}

}  // namespace

std::vector<Frame> load_raw_video(const fs::path& path, const VideoMeta& meta) {
  meta.validate_geometry();
  if (!fs::exists(path)) {
    throw IoError("cannot open " + path.string());
  }
  const auto data = read_file(path);
  const std::size_t fb = meta.frame_bytes();
  if (data.empty() || data.size() % fb != 0) {
    throw SizeMismatchError(path.string() + ": " + std::to_string(data.size()) +
                            " bytes is not a whole number of " + std::to_string(fb) + "-byte frames");
  }
  const std::size_t n = data.size() / fb;
  if (meta.frame_count != 0 && meta.frame_count != n) {
    throw SizeMismatchError(path.string() + ": holds " + std::to_string(n) + " frames, metadata says " +
                            std::to_string(meta.frame_count));
  }
  std::vector<Frame> frames;
  frames.reserve(n);
  const std::span<const std::uint8_t> all(data);
  for (std::size_t i = 0; i < n; ++i) {
    frames.push_back(Frame::from_packed(i, all.subspan(i * fb, fb), meta));
  }
  return frames;
}

void write_raw_video(const fs::path& path, std::span<const Frame> frames, const VideoMeta& meta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  for (const auto& f : frames) {
    if (!f.matches(meta)) {
      throw InvalidArgumentError("frame " + std::to_string(f.index) + " does not match video geometry");
    }
    write_frame(out, f);
  }
  if (!out) {
    throw IoError("short write to " + path.string());
  }
}

Video load_y4m(const fs::path& path) {
  const auto data = read_file(path);
  const auto header = parse_y4m_header(data, path);
  Video video;
  video.meta = header.meta;
  video.meta.validate_geometry();
  const std::size_t fb = video.meta.frame_bytes();
  std::size_t pos = header.header_size;
  const std::span<const std::uint8_t> all(data);
  while (pos < data.size()) {
    const auto nl = std::find(data.begin() + static_cast<std::ptrdiff_t>(pos), data.end(), '\n');
    if (nl == data.end() || std::string(data.begin() + static_cast<std::ptrdiff_t>(pos), nl).rfind("FRAME", 0) != 0) {
      throw IoError(path.string() + ": malformed FRAME marker at byte " + std::to_string(pos));
    }
    pos = static_cast<std::size_t>(nl - data.begin()) + 1;
    if (pos + fb > data.size()) {
      throw SizeMismatchError(path.string() + ": truncated frame " + std::to_string(video.frames.size()));
    }
    video.frames.push_back(Frame::from_packed(video.frames.size(), all.subspan(pos, fb), video.meta));
    pos += fb;
  }
  if (video.frames.empty()) {
    throw SizeMismatchError(path.string() + ": y4m stream has no frames");
  }
  video.meta.frame_count = video.frames.size();
  return video;
}

void write_y4m(const fs::path& path, std::span<const Frame> frames, const VideoMeta& meta) {
  meta.validate_geometry();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << "YUV4MPEG2 W" << meta.width << " H" << meta.height << " F" << fps_to_y4m(meta.fps)
      << " Ip A1:1 C420jpeg\n";
  for (const auto& f : frames) {
    if (!f.matches(meta)) {
      throw InvalidArgumentError("frame " + std::to_string(f.index) + " does not match video geometry");
    }
    out << "FRAME\n";
    write_frame(out, f);
  }
  if (!out) {
    throw IoError("short write to " + path.string());
  }
}

std::vector<Chunk> chunkify(std::span<const Frame> frames, const VideoMeta& meta, std::size_t frames_per_chunk) {
  if (frames_per_chunk < 1) {
    throw InvalidArgumentError("frames per chunk must be at least 1");
  }
  if (frames.empty()) {
    throw InvalidArgumentError("cannot chunk an empty frame sequence");
  }
  std::vector<Chunk> chunks;
  chunks.reserve((frames.size() + frames_per_chunk - 1) / frames_per_chunk);
  for (std::size_t start = 0; start < frames.size(); start += frames_per_chunk) {
    const std::size_t end = std::min(frames.size(), start + frames_per_chunk);
    Chunk c;
    c.chunk_id = chunks.size();
    c.meta = meta;
    c.meta.frame_count = end - start;
    c.frames_per_chunk = frames_per_chunk;
    for (std::size_t i = start; i < end; ++i) {
      if (!frames[i].matches(meta)) {
        throw InvalidArgumentError("frame " + std::to_string(frames[i].index) + " does not match video geometry");
      }
      c.frames.push_back(frames[i]);
    }
    chunks.push_back(std::move(c));
  }
  return chunks;
}

VideoSource probe_video(const fs::path& path) {
  VideoSource src;
  src.id = path.stem().string();
  src.path = path;
  const auto ext = path.extension().string();
  if (ext == ".y4m") {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
      throw IoError("cannot open " + path.string());
    }
    std::string line;
    std::getline(in, line);
    std::vector<std::uint8_t> head(line.begin(), line.end());
    head.push_back('\n');
    src.meta = parse_y4m_header(head, path).meta;
    src.meta.validate_geometry();
    const auto size = fs::file_size(path);
    const std::size_t per_frame = src.meta.frame_bytes() + 6;  // "FRAME\n" without parameters
    const std::size_t body = size - (line.size() + 1);
    src.meta.frame_count = body / per_frame;
    return src;
  }
  if (ext == ".yuv") {
    auto sidecar = path;
    sidecar.replace_extension(".json");
    std::ifstream in(sidecar);
    if (!in) {
      throw IoError(path.string() + ": raw video needs a sidecar " + sidecar.string());
    }
    nlohmann::json j;
    try {
      in >> j;
      src.meta.width = j.at("width").get<int>();
      src.meta.height = j.at("height").get<int>();
      src.meta.fps = j.at("fps").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw IoError(sidecar.string() + ": " + e.what());
    }
    src.meta.validate_geometry();
    const auto size = fs::file_size(path);
    if (size == 0 || size % src.meta.frame_bytes() != 0) {
      throw SizeMismatchError(path.string() + ": not a whole number of frames");
    }
    src.meta.frame_count = size / src.meta.frame_bytes();
    return src;
  }
  throw InvalidArgumentError(path.string() + ": unsupported video extension '" + ext + "'");
}

Video load_video(const VideoSource& source) {
  if (source.path.extension() == ".y4m") {
    return load_y4m(source.path);
  }
  Video v;
  v.meta = source.meta;
  v.frames = load_raw_video(source.path, source.meta);
  v.meta.frame_count = v.frames.size();
  return v;
}

std::vector<VideoSource> scan_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw IoError("corpus directory " + dir.string() + " does not exist");
  }
  std::vector<VideoSource> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".y4m" || ext == ".yuv")) {
      out.push_back(probe_video(entry.path()));
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

}  // namespace rtqc
