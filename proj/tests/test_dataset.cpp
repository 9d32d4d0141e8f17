#include <fstream>
#include <iostream>
#include <set>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "rtqc/dataset_builder.hpp"
#include "rtqc/error.hpp"
#include "rtqc/synthetic.hpp"
#include "support.hpp"

using namespace rtqc;
using fixture::TempDir;

namespace {

EncoderConfig identity_codec() {
  EncoderConfig c;
  c.encode_command_template = "sh -c 'cp \"$0\" \"$1\"' {input} {output} {qp} {width} {height} {fps}";
  c.decode_command_template = "cp {input} {output}";
  return c;
}

std::vector<VideoSource> tiny_corpus(const std::filesystem::path& dir, std::size_t clips, std::size_t frames_per_clip) {
  std::vector<SyntheticClip> list;
  for (std::size_t k = 0; k < clips; ++k) {
    SyntheticClip c;
    c.name = "clip" + std::to_string(k);
    c.width = 16;
    c.height = 16;
    c.frames_per_chunk = frames_per_clip;
    c.chunks = {{1.0 + k, 4.0, 1.0, false, 100}};
    c.seed = k;
    list.push_back(c);
  }
  return write_synthetic_corpus(list, dir);
}

}  // namespace

TEST(RdTable, JsonRoundTripAndLookup) {
  auto t = fixture::linear_table(60, 1);
  t.chunk_path = "/x/c.yuv";
  EXPECT_TRUE(t.complete());
  const auto back = RdTable::from_json(t.to_json());
  EXPECT_EQ(back, t);
  EXPECT_DOUBLE_EQ(back.at(20).chunk_psnr, 40.0);
  t.entries.erase(7);
  EXPECT_FALSE(t.complete());
  EXPECT_FALSE(t.has(7));
  EXPECT_THROW(t.at(7), MissingTableError);
}

TEST(RdTable, RejectsOutOfRangeKeys) {
  auto j = fixture::linear_table(60, 1).to_json();
  j["entries"].push_back({{"qp", 52}, {"psnr", 1.0}, {"bitrate", 1.0}, {"bytes", 1}});
  EXPECT_THROW(RdTable::from_json(j), Error);
}

TEST(RdTable, InversionFractionAndMonotoneSpan) {
  auto t = fixture::linear_table(60, 1);
  EXPECT_EQ(t.inversion_fraction(), 0.0);
  EXPECT_TRUE(t.monotone_between(0, 51));
  t.entries[30].chunk_psnr = 45.0;  // above qp 29's 31 dB
  EXPECT_DOUBLE_EQ(t.inversion_fraction(), 1.0 / 51.0);
  EXPECT_FALSE(t.monotone_between(20, 40));
  EXPECT_TRUE(t.monotone_between(31, 51));
}

TEST(RdTable, FileRoundTrip) {
  TempDir dir;
  std::vector<RdTable> ts{fixture::linear_table(60, 1, 0), fixture::linear_table(55, 0.7, 1)};
  write_rd_table_file(dir / "v.rd.jsonl", ts);
  EXPECT_EQ(read_rd_table_file(dir / "v.rd.jsonl"), ts);
  std::ofstream(dir / "bad.rd.jsonl") << "{not json\n";
  EXPECT_THROW(read_rd_table_file(dir / "bad.rd.jsonl"), IoError);
}

TEST(ContentHash, StableAndSensitive) {
  const auto m = fixture::small_meta();
  const auto a = fixture::flat_chunk(m, 10, 2);
  auto b = a;
  EXPECT_EQ(content_hash(a), content_hash(b));
  EXPECT_EQ(content_hash(a).size(), 64u);
  b.frames[1].v_plane[3] = 11;
  EXPECT_NE(content_hash(a), content_hash(b));
  const std::vector<std::uint8_t> abc{'a', 'b', 'c'};
  EXPECT_EQ(content_hash(abc), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(BuildRdTables, TwentyFourFramesGivesThreeFullTables) {
  TempDir dir;
  const auto corpus = tiny_corpus(dir / "corpus", 1, 24);
  BuildOptions o;
  o.encoder = identity_codec();
  o.out_dir = dir / "tables";
  const auto s = build_rd_tables(corpus, o);
  EXPECT_TRUE(s.failures.empty());
  ASSERT_EQ(s.tables.size(), 3u);
  EXPECT_EQ(s.encodes_performed, 156u);
  for (const auto& t : s.tables) {
    EXPECT_TRUE(t.complete());
    EXPECT_EQ(t.num_frames, 8u);
    EXPECT_TRUE(std::filesystem::exists(t.chunk_path));
    EXPECT_EQ(file_content_hash(t.chunk_path), t.content_hash);
  }
  EXPECT_TRUE(std::filesystem::exists(s.manifest_path));
  std::ifstream in(s.manifest_path);
  const auto m = nlohmann::json::parse(in);
  EXPECT_EQ(m.at("frames_per_chunk").get<int>(), 8);
  EXPECT_EQ(m.at("videos").size(), 1u);

  const auto again = build_rd_tables(corpus, o);
  EXPECT_EQ(again.encodes_performed, 0u);
  EXPECT_EQ(again.encodes_skipped, 156u);
  EXPECT_EQ(again.tables, s.tables);
  EXPECT_EQ(load_rd_tables(o.out_dir), s.tables);
}

TEST(BuildRdTables, ResumesPartialTables) {
  TempDir dir;
  const auto corpus = tiny_corpus(dir / "corpus", 2, 8);
  BuildOptions o;
  o.encoder = identity_codec();
  o.out_dir = dir / "tables";
  o.qps = {10, 20};
  EXPECT_EQ(build_rd_tables(corpus, o).encodes_performed, 4u);
  o.qps = {10, 20, 30};
  const auto s = build_rd_tables(corpus, o);
  EXPECT_EQ(s.encodes_performed, 2u);
  EXPECT_EQ(s.encodes_skipped, 4u);
  for (const auto& t : s.tables) {
    EXPECT_EQ(t.entries.size(), 3u);
  }
}

TEST(BuildRdTables, ContentChangeInvalidatesCache) {
  TempDir dir;
  auto corpus = tiny_corpus(dir / "corpus", 1, 8);
  BuildOptions o;
  o.encoder = identity_codec();
  o.out_dir = dir / "tables";
  o.qps = {10};
  build_rd_tables(corpus, o);
  SyntheticClip c;
  c.name = "clip0";
  c.width = 16;
  c.height = 16;
  c.chunks = {{0.0, 0.0, 0.0, false, 33}};
  corpus = write_synthetic_corpus(std::vector<SyntheticClip>{c}, dir / "corpus");
  EXPECT_EQ(build_rd_tables(corpus, o).encodes_performed, 1u);
}

TEST(BuildRdTables, EncoderFailuresAreCollected) {
  TempDir dir;
  const auto corpus = tiny_corpus(dir / "corpus", 1, 8);
  BuildOptions o;
  o.encoder = identity_codec();
  o.encoder.encode_command_template =
      "sh -c 'if [ \"$2\" = 7 ]; then exit 3; fi; cp \"$0\" \"$1\"' {input} {output} {qp} {width} {height} {fps}";
  o.out_dir = dir / "tables";
  o.qps = {6, 7, 8};
  const auto s = build_rd_tables(corpus, o);
  ASSERT_EQ(s.failures.size(), 1u);
  EXPECT_EQ(s.failures[0].qp, 7);
  ASSERT_EQ(s.tables.size(), 1u);
  EXPECT_TRUE(s.tables[0].has(6));
  EXPECT_FALSE(s.tables[0].has(7));
  EXPECT_TRUE(s.tables[0].has(8));
}

TEST(BuildRdTables, ParallelMatchesSerial) {
  TempDir dir;
  const auto corpus = tiny_corpus(dir / "corpus", 3, 16);
  BuildOptions o;
  o.encoder = identity_codec();
  o.qps = {0, 25, 51};
  o.out_dir = dir / "serial";
  const auto a = build_rd_tables(corpus, o);
  o.out_dir = dir / "parallel";
  o.parallelism = 4;
  auto b = build_rd_tables(corpus, o);
  ASSERT_EQ(a.tables.size(), b.tables.size());
  for (std::size_t i = 0; i < a.tables.size(); ++i) {
    EXPECT_EQ(a.tables[i].entries, b.tables[i].entries);
    EXPECT_EQ(a.tables[i].content_hash, b.tables[i].content_hash);
  }
}

TEST(BuildRdTables, ShortFinalChunkIsKept) {
  TempDir dir;
  SyntheticClip c;
  c.name = "odd";
  c.width = 16;
  c.height = 16;
  c.frames_per_chunk = 5;
  c.chunks = {{1.0, 2.0, 1.0, false, 100}, {1.0, 2.0, 1.0, false, 100}};
  const auto corpus = write_synthetic_corpus(std::vector<SyntheticClip>{c}, dir / "corpus");  // 10 frames
  BuildOptions o;
  o.encoder = identity_codec();
  o.out_dir = dir / "tables";
  o.qps = {30};
  o.frames_per_chunk = 4;
  const auto s = build_rd_tables(corpus, o);
  ASSERT_EQ(s.tables.size(), 3u);
  EXPECT_TRUE(s.tables[2].is_short());
  EXPECT_EQ(s.tables[2].num_frames, 2u);
}

TEST(TrainingManifest, TenChunksSplitEightTwo) {
  std::vector<RdTable> tables;
  for (std::size_t i = 0; i < 10; ++i) {
    auto t = fixture::linear_table(60 - i, 0.8, i);
    t.chunk_path = "/data/c" + std::to_string(i) + ".yuv";
    tables.push_back(t);
  }
  const auto split = emit_training_manifest(tables, 0.8, 42);
  EXPECT_EQ(split.train.size(), 8u * 52);
  EXPECT_EQ(split.test.size(), 2u * 52);
  std::set<std::string> train_paths;
  for (const auto& s : split.train) {
    train_paths.insert(s.chunk_path);
  }
  for (const auto& s : split.test) {
    EXPECT_FALSE(train_paths.contains(s.chunk_path));
  }
  for (const auto& s : split.train) {
    const auto idx = std::stoul(s.chunk_path.substr(7));
    EXPECT_DOUBLE_EQ(s.lambda_target_db, tables[idx].at(s.qp_target).chunk_psnr);
    EXPECT_EQ(s.frames, 8u);
  }
  const auto same = emit_training_manifest(tables, 0.8, 42);
  EXPECT_EQ(same.train, split.train);
  EXPECT_THROW(emit_training_manifest(tables, 1.0, 0), InvalidArgumentError);
}

TEST(TrainingManifest, CsvRoundTrip) {
  TempDir dir;
  std::vector<TrainingSample> rows{{"/a/b.yuv", 96, 64, 25.0, 8, 31, 37.123456789012345},
                                   {"/a/c.yuv", 96, 64, 29.97, 7, 0, 100.0}};
  write_training_manifest_csv(dir / "m.csv", rows);
  std::ifstream in(dir / "m.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "chunk_path,width,height,fps,T,qp_target,lambda_target_db");
  EXPECT_EQ(read_training_manifest_csv(dir / "m.csv"), rows);
}

TEST(ReferenceTables, InversionsAreMeasuredAndLosslessEndDominates) {
  RTQC_REQUIRE_FFMPEG(ff);
  TempDir dir;
  const auto clips = default_synthetic_corpus(3, 1, 32, 32, 25, 8, 11);
  const auto corpus = write_synthetic_corpus(clips, dir / "corpus");
  BuildOptions o;
  o.encoder = EncoderConfig::reference(ff);
  o.out_dir = dir / "tables";
  const auto s = build_rd_tables(corpus, o);
  ASSERT_TRUE(s.failures.empty());
  std::size_t pairs = 0;
  std::size_t inversions = 0;
  for (const auto& t : s.tables) {
    EXPECT_GE(t.at(0).chunk_psnr, t.at(51).chunk_psnr);
    for (int q = 1; q <= kMaxQp; ++q) {
      ++pairs;
      inversions += t.at(q).chunk_psnr > t.at(q - 1).chunk_psnr ? 1 : 0;
    }
  }
  const double fraction = static_cast<double>(inversions) / pairs;
  std::ifstream in(s.manifest_path);
  EXPECT_DOUBLE_EQ(nlohmann::json::parse(in).at("inversion_fraction").get<double>(), fraction);
  // x264 is only near-monotone on small noisy frames; keep the rate visible in the test log.
  RecordProperty("inversion_fraction", std::to_string(fraction));
  std::cout << "adjacent-QP inversion fraction: " << fraction << '\n';
}
