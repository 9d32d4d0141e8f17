#include "rtqc/dash.hpp"

#include <algorithm>

#include "rtqc/csv.hpp"
#include "rtqc/error.hpp"

namespace rtqc {

namespace fs = std::filesystem;

void DashLadder::validate() const {
  if (levels.empty()) {
    throw InvalidArgumentError("DASH ladder has no levels");
  }
  if (lookahead_chunks < 1) {
    throw InvalidArgumentError("DASH lookahead must be at least one chunk");
  }
  for (const auto& l : levels) {
    check_qp(l.qp);
    if (l.scale_factor < 1) {
      throw InvalidArgumentError("ladder level '" + l.name + "' has scale factor < 1");
    }
  }
}

bool DashLadder::has_scaled_levels() const {
  return std::any_of(levels.begin(), levels.end(), [](const auto& l) { return l.scale_factor > 1; });
}

nlohmann::json DashLadder::to_json() const {
  nlohmann::json lv = nlohmann::json::array();
  for (const auto& l : levels) {
    lv.push_back({{"name", l.name}, {"qp", l.qp}, {"scale_factor", l.scale_factor}});
  }
  return {{"levels", std::move(lv)}, {"lookahead_chunks", lookahead_chunks}, {"causal", causal}};
}

DashLadder DashLadder::from_csv(const fs::path& path, std::size_t lookahead_chunks) {
  const auto table = csv::read_file(path, false);
  DashLadder ladder;
  ladder.lookahead_chunks = lookahead_chunks;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    if (i == 0 && !row.empty() && row[0] == "name") {
      continue;
    }
    if (row.size() < 2 || row.size() > 3) {
      throw IoError(path.string() + ": ladder rows are name,qp[,scale_factor]");
    }
    LadderLevel level;
    level.name = row[0];
    level.qp = static_cast<int>(csv::parse_int(row[1]));
    if (row.size() == 3 && !row[2].empty()) {
      level.scale_factor = static_cast<int>(csv::parse_int(row[2]));
    }
    ladder.levels.push_back(level);
  }
  ladder.validate();
  return ladder;
}

DashLadder DashLadder::default_ladder(std::size_t lookahead_chunks) {
  DashLadder l;
  l.lookahead_chunks = lookahead_chunks;
  l.levels = {{"q44", 44, 1}, {"q36", 36, 1}, {"q28", 28, 1}, {"q20", 20, 1}, {"q12", 12, 1}};
  return l;
}

RungMatrix rung_matrix_from_tables(std::span<const RdTable> stream_tables, const DashLadder& ladder) {
  ladder.validate();
  RungMatrix m;
  m.reserve(stream_tables.size());
  for (const auto& t : stream_tables) {
    std::vector<RungSample> row;
    for (const auto& level : ladder.levels) {
      if (level.scale_factor != 1) {
        throw InvalidArgumentError("level '" + level.name + "' is resolution-scaled; measure it with measure_rungs");
      }
      const auto& e = t.at(level.qp);
      row.push_back({e.chunk_psnr, e.bitrate});
    }
    m.push_back(std::move(row));
  }
  return m;
}

RungMatrix measure_rungs(std::span<const Chunk> chunks, std::span<const RdTable> stream_tables,
                         const DashLadder& ladder, const EncoderConfig& cfg) {
  ladder.validate();
  RungMatrix m;
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    std::vector<RungSample> row;
    for (const auto& level : ladder.levels) {
      if (level.scale_factor == 1 && c < stream_tables.size() && stream_tables[c].has(level.qp)) {
        const auto& e = stream_tables[c].at(level.qp);
        row.push_back({e.chunk_psnr, e.bitrate});
        continue;
      }
      const auto enc = encode_and_decode_scaled(chunks[c], level.qp, level.scale_factor, cfg);
      row.push_back({enc.result.chunk_psnr, enc.result.bitrate});
    }
    m.push_back(std::move(row));
  }
  return m;
}

std::size_t dash_select(std::span<const std::vector<RungSample>> window, const DashLadder& ladder, double lambda_db) {
  if (ladder.levels.empty()) {
    throw InvalidArgumentError("DASH ladder has no levels");
  }
  if (window.empty()) {
    throw InvalidArgumentError("dash_select: empty window");
  }
  for (std::size_t level = 0; level < ladder.levels.size(); ++level) {
    double sum = 0.0;
    for (const auto& row : window) {
      if (row.size() != ladder.levels.size()) {
        throw MissingTableError("rung data does not cover every ladder level");
      }
      sum += row[level].chunk_psnr;
    }
    if (sum / static_cast<double>(window.size()) >= lambda_db) {
      return level;
    }
  }
  return ladder.levels.size() - 1;
}

std::size_t dash_select(std::span<const RdTable> window, const DashLadder& ladder, double lambda_db) {
  const auto m = rung_matrix_from_tables(window, ladder);
  return dash_select(std::span<const std::vector<RungSample>>(m), ladder, lambda_db);
}

std::vector<DashChunkRecord> run_dash(const RungMatrix& samples, const DashLadder& ladder,
                                      const TargetSchedule& schedule) {
  ladder.validate();
  std::vector<DashChunkRecord> out;
  const std::size_t n = samples.size();
  const std::size_t N = ladder.lookahead_chunks;
  std::size_t start = 0;
  while (start < n) {
    std::size_t end = std::min(n, start + N);
    if (const auto change = schedule.next_change_after(start); change && *change < end) {
      end = *change;
    }
    const double lambda = schedule.lambda_at(start);
    std::size_t level = ladder.levels.size() - 1;
    if (!ladder.causal) {
      level = dash_select(std::span<const std::vector<RungSample>>(samples).subspan(start, end - start), ladder, lambda);
    } else if (start > 0) {
      const std::size_t from = start >= N ? start - N : 0;
      level = dash_select(std::span<const std::vector<RungSample>>(samples).subspan(from, start - from), ladder, lambda);
    }
    for (std::size_t c = start; c < end; ++c) {
      const auto& s = samples[c].at(level);
      out.push_back({c, level, start, schedule.lambda_at(c), s.chunk_psnr, s.bitrate});
    }
    start = end;
  }
  return out;
}

std::vector<DashChunkRecord> run_dash(std::span<const RdTable> stream_tables, const DashLadder& ladder,
                                      const TargetSchedule& schedule) {
  return run_dash(rung_matrix_from_tables(stream_tables, ladder), ladder, schedule);
}

std::vector<double> level_mean_bitrates(std::span<const RungMatrix> streams, std::size_t num_levels) {
  std::vector<double> sums(num_levels, 0.0);
  std::size_t count = 0;
  for (const auto& m : streams) {
    for (const auto& row : m) {
      for (std::size_t l = 0; l < num_levels; ++l) {
        sums[l] += row.at(l).bitrate;
      }
      ++count;
    }
  }
  if (count > 0) {
    for (auto& s : sums) {
      s /= static_cast<double>(count);
    }
  }
  return sums;
}

void check_ladder_order(std::span<const RungMatrix> streams, const DashLadder& ladder) {
  const auto means = level_mean_bitrates(streams, ladder.levels.size());
  for (std::size_t l = 1; l < means.size(); ++l) {
    if (!(means[l] > means[l - 1])) {
      throw InvalidArgumentError("ladder level '" + ladder.levels[l].name +
                                 "' does not have a higher mean bitrate than '" + ladder.levels[l - 1].name + "'");
    }
  }
}

}  // namespace rtqc
