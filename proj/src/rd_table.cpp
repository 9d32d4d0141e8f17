#include "rtqc/rd_table.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "rtqc/encoder_driver.hpp"
#include "rtqc/error.hpp"

namespace rtqc {

namespace fs = std::filesystem;

bool RdTable::complete() const {
  if (entries.size() != static_cast<std::size_t>(kNumQps)) {
    return false;
  }
  return entries.begin()->first == kMinQp && entries.rbegin()->first == kMaxQp;
}

const RdEntry& RdTable::at(int qp) const {
  const auto it = entries.find(qp);
  if (it == entries.end()) {
    throw MissingTableError(source + " chunk " + std::to_string(chunk_id) + ": no measurement at qp " +
                            std::to_string(qp));
  }
  return it->second;
}

double RdTable::inversion_fraction() const {
  if (entries.size() < 2) {
    return 0.0;
  }
  std::size_t inversions = 0;
  auto prev = entries.begin();
  for (auto it = std::next(prev); it != entries.end(); prev = it++) {
    if (it->second.chunk_psnr > prev->second.chunk_psnr) {
      ++inversions;
    }
  }
  return static_cast<double>(inversions) / static_cast<double>(entries.size() - 1);
}

bool RdTable::monotone_between(int lo, int hi) const {
  const auto first = entries.lower_bound(lo);
  const auto last = entries.upper_bound(hi);
  if (first == last) {
    return true;
  }
  for (auto prev = first, it = std::next(first); it != last; prev = it++) {
    if (it->second.chunk_psnr > prev->second.chunk_psnr) {
      return false;
    }
  }
  return true;
}

nlohmann::json RdTable::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [qp, e] : entries) {
    rows.push_back({{"qp", qp}, {"psnr", e.chunk_psnr}, {"bitrate", e.bitrate}, {"bytes", e.encoded_bytes}});
  }
  return {{"source", source},
          {"chunk", chunk_id},
          {"hash", content_hash},
          {"chunk_path", chunk_path},
          {"width", width},
          {"height", height},
          {"fps", fps},
          {"frames", num_frames},
          {"T", frames_per_chunk},
          {"inversion_fraction", inversion_fraction()},
          {"entries", std::move(rows)}};
}

RdTable RdTable::from_json(const nlohmann::json& j) {
  RdTable t;
  try {
    t.source = j.at("source").get<std::string>();
    t.chunk_id = j.at("chunk").get<std::size_t>();
    t.content_hash = j.at("hash").get<std::string>();
    t.chunk_path = j.value("chunk_path", "");
    t.width = j.at("width").get<int>();
    t.height = j.at("height").get<int>();
    t.fps = j.at("fps").get<double>();
    t.num_frames = j.at("frames").get<std::size_t>();
    t.frames_per_chunk = j.at("T").get<std::size_t>();
    for (const auto& row : j.at("entries")) {
      const int qp = row.at("qp").get<int>();
      check_qp(qp);
      RdEntry e{row.at("psnr").get<double>(), row.at("bitrate").get<double>(), row.at("bytes").get<std::uint64_t>()};
      if (!std::isfinite(e.chunk_psnr)) {
        throw IoError("non-finite PSNR in table");
      }
      t.entries.emplace(qp, e);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed RdTable: ") + e.what());
  }
  return t;
}

std::vector<RdTable> read_rd_table_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::vector<RdTable> tables;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    try {
      tables.push_back(RdTable::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return tables;
}

void write_rd_table_file(const fs::path& path, std::span<const RdTable> tables) {
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) {
      throw IoError("cannot write " + tmp.string());
    }
    for (const auto& t : tables) {
      out << t.to_json().dump() << '\n';
    }
    if (!out) {
      throw IoError("short write to " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

std::string content_hash(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  std::ostringstream ss;
  for (unsigned int i = 0; i < len; ++i) {
    ss << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return ss.str();
}

std::string content_hash(const Chunk& chunk) { return content_hash(chunk.packed_bytes()); }

std::string file_content_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  const std::vector<std::uint8_t> data(std::istreambuf_iterator<char>(in), {});
  return content_hash(data);
}

}  // namespace rtqc
