#include "rtqc/encoder_driver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "rtqc/error.hpp"
#include "rtqc/metrics.hpp"
#include "rtqc/process.hpp"

namespace rtqc {

namespace fs = std::filesystem;

void check_qp(int qp) {
  if (qp < kMinQp || qp > kMaxQp) {
    throw InvalidArgumentError("qp " + std::to_string(qp) + " outside [0, 51]");
  }
}

std::vector<int> all_qps() {
  std::vector<int> qps;
  for (int q = kMinQp; q <= kMaxQp; ++q) {
    qps.push_back(q);
  }
  return qps;
}

double bitrate_for(std::uint64_t encoded_bytes, double fps, std::size_t num_frames) {
  if (num_frames == 0) {
    throw InvalidArgumentError("bitrate of a zero-frame encode");
  }
  return 8.0 * static_cast<double>(encoded_bytes) * fps / static_cast<double>(num_frames);
}

namespace {

void require_placeholders(const std::string& tmpl, std::initializer_list<const char*> names, const char* which) {
  for (const char* name : names) {
    if (tmpl.find(std::string("{") + name + "}") == std::string::npos) {
      throw InvalidArgumentError(std::string(which) + " command template lacks {" + name + "}: " + tmpl);
    }
  }
}

std::string format_fps(double fps) {
  std::ostringstream ss;
  ss.precision(10);
  ss << fps;
  return ss.str();
}

class ScratchDir {
 public:
  ScratchDir(const fs::path& root, bool keep) : keep_(keep) {
    const fs::path base = root.empty() ? fs::temp_directory_path() : root;
    fs::create_directories(base);
    std::string pattern = (base / "rtqc-enc-XXXXXX").string();
    if (::mkdtemp(pattern.data()) == nullptr) {
      throw IoError("cannot create scratch directory under " + base.string());
    }
    path_ = pattern;
  }
  ~ScratchDir() {
    if (!keep_) {
      std::error_code ec;
      fs::remove_all(path_, ec);
    }
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  bool keep_;
};

void run_checked(const std::vector<std::string>& argv, const char* what) {
  const auto res = run_process(argv);
  if (res.exit_code != 0) {
    throw ExternalToolError(std::string(what) + " failed with exit code " + std::to_string(res.exit_code) + ": " +
                                res.output,
                            res.exit_code, res.output);
  }
}

std::vector<Frame> read_decoded(const fs::path& path, const VideoMeta& meta, std::size_t expected) {
  VideoMeta m = meta;
  m.frame_count = 0;
  std::vector<Frame> frames;
  try {
    frames = load_raw_video(path, m);
  } catch (const Error& e) {
    throw ExternalToolError(std::string("decoder output unusable: ") + e.what(), 0, "");
  }
  if (frames.size() != expected) {
    throw ExternalToolError("decoder produced " + std::to_string(frames.size()) + " frames, expected " +
                                std::to_string(expected),
                            0, "");
  }
  return frames;
}

EncodeResult measure(const Chunk& chunk, const std::vector<Frame>& decoded, int qp, std::uint64_t bytes) {
  EncodeResult r;
  r.qp = qp;
  r.encoded_bytes = bytes;
  r.bitrate = bitrate_for(bytes, chunk.meta.fps, chunk.num_frames());
  r.frame_psnr.reserve(chunk.num_frames());
  for (std::size_t i = 0; i < chunk.num_frames(); ++i) {
    r.frame_psnr.push_back(psnr_frame(chunk.frames[i], decoded[i]));
  }
  r.chunk_psnr = mean(r.frame_psnr);
  return r;
}

int even_at_least_two(int v) { return std::max(2, v - (v % 2)); }

}  // namespace

std::vector<std::string> expand_template(const std::string& tmpl, const std::map<std::string, std::string>& values,
                                         std::span<const std::string> extra) {
  std::vector<std::string> out;
  bool extra_placed = false;
  for (auto word : split_command(tmpl)) {
    if (word == "{extra}") {
      out.insert(out.end(), extra.begin(), extra.end());
      extra_placed = true;
      continue;
    }
    for (const auto& [key, val] : values) {
      const std::string ph = "{" + key + "}";
      for (auto pos = word.find(ph); pos != std::string::npos; pos = word.find(ph, pos + val.size())) {
        word.replace(pos, ph.size(), val);
      }
    }
    out.push_back(std::move(word));
  }
  if (!extra_placed && !extra.empty()) {
    // Before the final word, which is the output path in every reference template.
    out.insert(out.end() - 1, extra.begin(), extra.end());
  }
  return out;
}

void EncoderConfig::validate() const {
  require_placeholders(encode_command_template, {"input", "output", "qp", "width", "height", "fps"}, "encode");
  require_placeholders(decode_command_template, {"input", "output"}, "decode");
  if (!scale_command_template.empty()) {
    require_placeholders(scale_command_template, {"input", "output", "width", "height", "out_width", "out_height"},
                         "scale");
  }
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"encode_command_template", encode_command_template},
          {"decode_command_template", decode_command_template},
          {"scale_command_template", scale_command_template},
          {"version_command", version_command},
          {"gop_mode", "one-gop-per-chunk"},
          {"extra_flags", extra_flags}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.encode_command_template = j.at("encode_command_template").get<std::string>();
  c.decode_command_template = j.at("decode_command_template").get<std::string>();
  c.scale_command_template = j.value("scale_command_template", "");
  c.version_command = j.value("version_command", "");
  c.extra_flags = j.value("extra_flags", std::vector<std::string>{});
  c.validate();
  return c;
}

EncoderConfig EncoderConfig::reference(const std::string& ffmpeg_path) {
  const std::string ff = quote_word(ffmpeg_path);
  EncoderConfig c;
  c.encode_command_template =
      ff +
      " -hide_banner -loglevel error -nostdin -y -f rawvideo -pix_fmt yuv420p -s {width}x{height}"
      " -framerate {fps} -i {input} -an -c:v libx264 -preset medium -tune psnr -qp {qp}"
      " -g {frames} -keyint_min {frames} -sc_threshold 0 -threads 1"
      " -x264-params threads=1:lookahead-threads=1:sliced-threads=0 {extra} -f h264 {output}";
  c.decode_command_template =
      ff + " -hide_banner -loglevel error -nostdin -y -threads 1 -i {input} -fps_mode passthrough"
           " -f rawvideo -pix_fmt yuv420p {output}";
  c.scale_command_template =
      ff +
      " -hide_banner -loglevel error -nostdin -y -f rawvideo -pix_fmt yuv420p -s {width}x{height}"
      " -framerate {fps} -i {input} -vf scale={out_width}:{out_height}:flags=bicubic -fps_mode passthrough"
      " -f rawvideo -pix_fmt yuv420p {output}";
  c.version_command = ff + " -version";
  return c;
}

std::string find_ffmpeg() {
  if (const char* env = std::getenv("RTQC_FFMPEG"); env != nullptr && *env != '\0') {
    if (auto p = which(env)) {
      return *p;
    }
    throw ExternalToolError(std::string("RTQC_FFMPEG=") + env + " is not executable", -1, "");
  }
  if (auto p = which("ffmpeg")) {
    return *p;
  }
#ifdef RTQC_DEFAULT_FFMPEG
  // whatever the build located, e.g. the imageio-ffmpeg static binary
  if (auto p = which(RTQC_DEFAULT_FFMPEG)) {
    return *p;
  }
#endif
  throw ExternalToolError("ffmpeg not found (set RTQC_FFMPEG or add ffmpeg to PATH)", -1, "");
}

std::string encoder_version(const EncoderConfig& cfg) {
  if (cfg.version_command.empty()) {
    return "unknown";
  }
  try {
    const auto res = run_process(split_command(cfg.version_command));
    if (res.exit_code != 0) {
      return "unknown";
    }
    return res.output.substr(0, res.output.find('\n'));
  } catch (const Error&) {
    return "unknown";
  }
}

EncodedChunk encode_and_decode(const Chunk& chunk, int qp, const EncoderConfig& cfg) {
  check_qp(qp);
  if (chunk.frames.empty()) {
    throw InvalidArgumentError("cannot encode an empty chunk");
  }
  cfg.validate();
  ScratchDir scratch(cfg.scratch_root, cfg.keep_artifacts);
  const auto input = scratch.path() / "input.yuv";
  const auto encoded = scratch.path() / "encoded.264";
  const auto decoded = scratch.path() / "decoded.yuv";
  write_raw_video(input, chunk.frames, chunk.meta);

  const std::map<std::string, std::string> enc_vars{
      {"input", input.string()},
      {"output", encoded.string()},
      {"qp", std::to_string(qp)},
      {"width", std::to_string(chunk.meta.width)},
      {"height", std::to_string(chunk.meta.height)},
      {"fps", format_fps(chunk.meta.fps)},
      {"frames", std::to_string(chunk.num_frames())}};
  run_checked(expand_template(cfg.encode_command_template, enc_vars, cfg.extra_flags), "encoder");
  const auto bytes = fs::exists(encoded) ? fs::file_size(encoded) : 0;
  if (bytes == 0) {
    throw ExternalToolError("encoder produced an empty stream", 0, "");
  }

  auto dec_vars = enc_vars;
  dec_vars["input"] = encoded.string();
  dec_vars["output"] = decoded.string();
  run_checked(expand_template(cfg.decode_command_template, dec_vars), "decoder");

  EncodedChunk out;
  out.decoded = read_decoded(decoded, chunk.meta, chunk.num_frames());
  out.result = measure(chunk, out.decoded, qp, bytes);
  return out;
}

EncodeResult encode_chunk(const Chunk& chunk, int qp, const EncoderConfig& cfg) {
  return encode_and_decode(chunk, qp, cfg).result;
}

EncodedChunk encode_and_decode_scaled(const Chunk& chunk, int qp, int scale_divisor, const EncoderConfig& cfg) {
  if (scale_divisor < 1) {
    throw InvalidArgumentError("scale divisor must be at least 1");
  }
  if (scale_divisor == 1) {
    return encode_and_decode(chunk, qp, cfg);
  }
  check_qp(qp);
  if (cfg.scale_command_template.empty()) {
    throw InvalidArgumentError("resolution-scaled encode needs a scale command template");
  }
  cfg.validate();
  if (chunk.frames.empty()) {
    throw InvalidArgumentError("cannot encode an empty chunk");
  }
  ScratchDir scratch(cfg.scratch_root, cfg.keep_artifacts);
  const auto input = scratch.path() / "input.yuv";
  const auto small = scratch.path() / "small.yuv";
  const auto encoded = scratch.path() / "encoded.264";
  const auto decoded_small = scratch.path() / "decoded_small.yuv";
  const auto restored = scratch.path() / "restored.yuv";
  write_raw_video(input, chunk.frames, chunk.meta);

  VideoMeta small_meta = chunk.meta;
  small_meta.width = even_at_least_two(chunk.meta.width / scale_divisor);
  small_meta.height = even_at_least_two(chunk.meta.height / scale_divisor);
  const std::string fps = format_fps(chunk.meta.fps);

  run_checked(expand_template(cfg.scale_command_template,
                              {{"input", input.string()},
                               {"output", small.string()},
                               {"width", std::to_string(chunk.meta.width)},
                               {"height", std::to_string(chunk.meta.height)},
                               {"out_width", std::to_string(small_meta.width)},
                               {"out_height", std::to_string(small_meta.height)},
                               {"fps", fps}}),
              "downscale");
  const std::map<std::string, std::string> enc_vars{{"input", small.string()},
                                                    {"output", encoded.string()},
                                                    {"qp", std::to_string(qp)},
                                                    {"width", std::to_string(small_meta.width)},
                                                    {"height", std::to_string(small_meta.height)},
                                                    {"fps", fps},
                                                    {"frames", std::to_string(chunk.num_frames())}};
  run_checked(expand_template(cfg.encode_command_template, enc_vars, cfg.extra_flags), "encoder");
  const auto bytes = fs::exists(encoded) ? fs::file_size(encoded) : 0;
  if (bytes == 0) {
    throw ExternalToolError("encoder produced an empty stream", 0, "");
  }
  auto dec_vars = enc_vars;
  dec_vars["input"] = encoded.string();
  dec_vars["output"] = decoded_small.string();
  run_checked(expand_template(cfg.decode_command_template, dec_vars), "decoder");
  run_checked(expand_template(cfg.scale_command_template,
                              {{"input", decoded_small.string()},
                               {"output", restored.string()},
                               {"width", std::to_string(small_meta.width)},
                               {"height", std::to_string(small_meta.height)},
                               {"out_width", std::to_string(chunk.meta.width)},
                               {"out_height", std::to_string(chunk.meta.height)},
                               {"fps", fps}}),
              "upscale");
  EncodedChunk out;
  out.decoded = read_decoded(restored, chunk.meta, chunk.num_frames());
  out.result = measure(chunk, out.decoded, qp, bytes);
  return out;
}

std::vector<EncodeResult> sweep_chunk(const Chunk& chunk, std::span<const int> qps, const EncoderConfig& cfg) {
  if (qps.empty()) {
    throw InvalidArgumentError("sweep_chunk: empty QP set");
  }
  for (int qp : qps) {
    check_qp(qp);
  }
  std::vector<EncodeResult> results;
  results.reserve(qps.size());
  for (int qp : qps) {
    try {
      results.push_back(encode_chunk(chunk, qp, cfg));
    } catch (const Error& e) {
      throw SweepError(qp, e.what());
    }
  }
  return results;
}

}  // namespace rtqc
