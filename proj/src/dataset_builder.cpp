#include "rtqc/dataset_builder.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <thread>
#include <tuple>

#include "rtqc/csv.hpp"
#include "rtqc/error.hpp"
#include "rtqc/metrics.hpp"

namespace rtqc {

namespace fs = std::filesystem;

fs::path table_file_for(const fs::path& out_dir, const std::string& video_id) {
  return out_dir / (video_id + ".rd.jsonl");
}

namespace {

struct VideoWork {
  std::string id;
  fs::path table_path;
  std::vector<Chunk> chunks;
  std::vector<RdTable> tables;
  std::vector<std::size_t> pending;  // per chunk
  std::mutex mu;
};

struct Task {
  std::size_t video = 0;
  std::size_t chunk = 0;
  int qp = 0;
};

void write_manifest(const fs::path& path, const BuildOptions& options, std::span<const VideoSource> corpus,
                    const std::vector<std::unique_ptr<VideoWork>>& work, const std::vector<BuildFailure>& failures) {
  nlohmann::json videos = nlohmann::json::array();
  std::size_t pairs = 0;
  std::size_t inversions = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& w = *work[i];
    videos.push_back({{"id", w.id},
                      {"path", corpus[i].path.string()},
                      {"tables", w.table_path.filename().string()},
                      {"chunks", w.chunks.size()},
                      {"width", corpus[i].meta.width},
                      {"height", corpus[i].meta.height},
                      {"fps", corpus[i].meta.fps}});
    for (const auto& t : w.tables) {
      if (t.entries.size() >= 2) {
        pairs += t.entries.size() - 1;
        inversions += static_cast<std::size_t>(std::llround(t.inversion_fraction() * (t.entries.size() - 1)));
      }
    }
  }
  nlohmann::json fails = nlohmann::json::array();
  for (const auto& f : failures) {
    fails.push_back({{"source", f.source}, {"chunk", f.chunk_id}, {"qp", f.qp}, {"message", f.message}});
  }
  nlohmann::json manifest{
      {"format", "rtqc-rd-tables"},
      {"version", 1},
      {"frames_per_chunk", options.frames_per_chunk},
      {"qps", options.qps},
      {"encoder", options.encoder.to_json()},
      {"encoder_version", encoder_version(options.encoder)},
      {"gop", "one closed GOP per chunk; encoder-default internal structure"},
      {"psnr", {{"plane", "luma"}, {"pooling", "mean of per-frame"}, {"cap_db", kPsnrCapDb}}},
      {"inversion_fraction", pairs == 0 ? 0.0 : static_cast<double>(inversions) / static_cast<double>(pairs)},
      {"videos", std::move(videos)},
      {"failures", std::move(fails)}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << manifest.dump(2) << '\n';
}

}  // namespace

BuildSummary build_rd_tables(std::span<const VideoSource> corpus, const BuildOptions& options) {
  if (corpus.empty()) {
    throw InvalidArgumentError("build_rd_tables: empty corpus");
  }
  if (options.qps.empty()) {
    throw InvalidArgumentError("build_rd_tables: empty QP set");
  }
  for (int qp : options.qps) {
    check_qp(qp);
  }
  if (options.frames_per_chunk < 1) {
    throw InvalidArgumentError("frames per chunk must be at least 1");
  }
  options.encoder.validate();
  fs::create_directories(options.out_dir / "chunks");

  BuildSummary summary;
  std::vector<std::unique_ptr<VideoWork>> work;
  std::vector<Task> tasks;
  for (std::size_t vi = 0; vi < corpus.size(); ++vi) {
    const auto& src = corpus[vi];
    auto w = std::make_unique<VideoWork>();
    w->id = src.id;
    w->table_path = table_file_for(options.out_dir, src.id);
    const Video video = load_video(src);
    w->chunks = chunkify(video.frames, video.meta, options.frames_per_chunk);

    std::map<std::size_t, RdTable> previous;
    if (fs::exists(w->table_path)) {
      for (auto& t : read_rd_table_file(w->table_path)) {
        previous.emplace(t.chunk_id, std::move(t));
      }
    }

    w->pending.assign(w->chunks.size(), 0);
    for (const auto& chunk : w->chunks) {
      RdTable t;
      t.source = src.id;
      t.chunk_id = chunk.chunk_id;
      t.content_hash = content_hash(chunk);
      t.width = chunk.meta.width;
      t.height = chunk.meta.height;
      t.fps = chunk.meta.fps;
      t.num_frames = chunk.num_frames();
      t.frames_per_chunk = options.frames_per_chunk;
      const auto chunk_file = options.out_dir / "chunks" / (src.id + "_" + std::to_string(chunk.chunk_id) + ".yuv");
      if (!fs::exists(chunk_file) || file_content_hash(chunk_file) != t.content_hash) {
        write_raw_video(chunk_file, chunk.frames, chunk.meta);
      }
      t.chunk_path = fs::absolute(chunk_file).string();

      const auto prev = previous.find(chunk.chunk_id);
      const bool reusable = prev != previous.end() && prev->second.content_hash == t.content_hash &&
                            prev->second.frames_per_chunk == t.frames_per_chunk;
      if (reusable) {
        t.entries = prev->second.entries;
      }
      for (int qp : options.qps) {
        if (t.has(qp)) {
          ++summary.encodes_skipped;
        } else {
          tasks.push_back({vi, chunk.chunk_id, qp});
          ++w->pending[chunk.chunk_id];
        }
      }
      w->tables.push_back(std::move(t));
    }
    write_rd_table_file(w->table_path, w->tables);
    work.push_back(std::move(w));
  }

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> performed{0};
  std::mutex failures_mu;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) {
        return;
      }
      const Task& task = tasks[i];
      auto& w = *work[task.video];
      const Chunk& chunk = w.chunks[task.chunk];
      std::optional<EncodeResult> result;
      try {
        result = encode_chunk(chunk, task.qp, options.encoder);
        performed.fetch_add(1);
      } catch (const Error& e) {
        std::lock_guard lock(failures_mu);
        summary.failures.push_back({w.id, task.chunk, task.qp, e.what()});
      }
      std::lock_guard lock(w.mu);
      if (result) {
        w.tables[task.chunk].entries[task.qp] = {result->chunk_psnr, result->bitrate, result->encoded_bytes};
      }
      if (--w.pending[task.chunk] == 0) {
        write_rd_table_file(w.table_path, w.tables);
      }
    }
  };
  const unsigned n_workers = std::max(1u, std::min<unsigned>(options.parallelism, static_cast<unsigned>(tasks.size())));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (unsigned i = 0; i < n_workers; ++i) {
      threads.emplace_back(worker);
    }
  }

  std::sort(summary.failures.begin(), summary.failures.end(), [](const auto& a, const auto& b) {
    return std::tie(a.source, a.chunk_id, a.qp) < std::tie(b.source, b.chunk_id, b.qp);
  });
  summary.encodes_performed = performed.load();
  summary.manifest_path = options.out_dir / "manifest.json";
  write_manifest(summary.manifest_path, options, corpus, work, summary.failures);
  for (auto& w : work) {
    for (auto& t : w->tables) {
      summary.tables.push_back(std::move(t));
    }
  }
  return summary;
}

std::vector<RdTable> load_rd_tables(const fs::path& dir) {
  std::vector<fs::path> files;
  const auto manifest_path = dir / "manifest.json";
  if (fs::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    nlohmann::json m;
    try {
      in >> m;
      for (const auto& v : m.at("videos")) {
        files.push_back(dir / v.at("tables").get<std::string>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw IoError(manifest_path.string() + ": " + e.what());
    }
  } else if (fs::is_directory(dir)) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.path().string().ends_with(".rd.jsonl")) {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
  } else {
    throw MissingTableError("no RdTable directory at " + dir.string());
  }
  std::vector<RdTable> tables;
  for (const auto& f : files) {
    auto part = read_rd_table_file(f);
    tables.insert(tables.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return tables;
}

TrainingSplit emit_training_manifest(std::span<const RdTable> tables, double train_fraction, std::uint64_t seed) {
  if (tables.empty()) {
    throw InvalidArgumentError("emit_training_manifest: no tables");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InvalidArgumentError("train fraction must lie strictly between 0 and 1");
  }
  std::vector<std::size_t> order(tables.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i] = i;
  }
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(tables.size())));
  std::vector<bool> is_train(tables.size(), false);
  for (std::size_t i = 0; i < n_train; ++i) {
    is_train[order[i]] = true;
  }

  TrainingSplit split;
  for (std::size_t i = 0; i < tables.size(); ++i) {
    const auto& t = tables[i];
    if (t.chunk_path.empty()) {
      throw InvalidArgumentError(t.source + " chunk " + std::to_string(t.chunk_id) + " has no chunk file");
    }
    auto& side = is_train[i] ? split.train : split.test;
    for (const auto& [qp, e] : t.entries) {
      side.push_back({t.chunk_path, t.width, t.height, t.fps, t.num_frames, qp, e.chunk_psnr});
    }
  }
  return split;
}

void write_training_manifest_csv(const fs::path& path, std::span<const TrainingSample> samples) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << "chunk_path,width,height,fps,T,qp_target,lambda_target_db\n";
  for (const auto& s : samples) {
    out << csv::join_line({s.chunk_path, std::to_string(s.width), std::to_string(s.height),
                           csv::format_double(s.fps), std::to_string(s.frames), std::to_string(s.qp_target),
                           csv::format_double(s.lambda_target_db)})
        << '\n';
  }
}

std::vector<TrainingSample> read_training_manifest_csv(const fs::path& path) {
  const auto table = csv::read_file(path);
  const auto c_path = table.column("chunk_path");
  const auto c_w = table.column("width");
  const auto c_h = table.column("height");
  const auto c_fps = table.column("fps");
  const auto c_t = table.column("T");
  const auto c_qp = table.column("qp_target");
  const auto c_l = table.column("lambda_target_db");
  std::vector<TrainingSample> out;
  for (const auto& row : table.rows) {
    out.push_back({row[c_path], static_cast<int>(csv::parse_int(row[c_w])), static_cast<int>(csv::parse_int(row[c_h])),
                   csv::parse_double(row[c_fps]), static_cast<std::size_t>(csv::parse_int(row[c_t])),
                   static_cast<int>(csv::parse_int(row[c_qp])), csv::parse_double(row[c_l])});
  }
  return out;
}

}  // namespace rtqc
