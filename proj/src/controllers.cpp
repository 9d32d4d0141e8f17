#include "rtqc/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <unistd.h>

#include "rtqc/csv.hpp"
#include "rtqc/encoder_driver.hpp"
#include "rtqc/error.hpp"

namespace rtqc {

namespace fs = std::filesystem;

TargetSchedule::TargetSchedule(std::vector<Segment> segments) : segments_(std::move(segments)) {
  if (segments_.empty()) {
    throw InvalidArgumentError("target schedule needs at least one segment");
  }
  if (segments_.front().start_chunk != 0) {
    throw InvalidArgumentError("target schedule must start at chunk 0");
  }
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (!(segments_[i].lambda_db > 0.0) || !std::isfinite(segments_[i].lambda_db)) {
      throw InvalidArgumentError("target schedule lambda must be positive");
    }
    if (i > 0 && segments_[i].start_chunk <= segments_[i - 1].start_chunk) {
      throw InvalidArgumentError("target schedule start chunks must be strictly increasing");
    }
  }
}

TargetSchedule TargetSchedule::constant(double lambda_db) { return TargetSchedule({{0, lambda_db}}); }

TargetSchedule TargetSchedule::from_csv(const fs::path& path) {
  const auto table = csv::read_file(path, false);
  std::vector<Segment> segs;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    if (row.size() != 2) {
      throw IoError(path.string() + ": schedule rows need exactly two fields");
    }
    if (i == 0 && row[0] == "start_chunk") {
      continue;
    }
    const auto start = csv::parse_int(row[0]);
    if (start < 0) {
      throw InvalidArgumentError(path.string() + ": negative start chunk");
    }
    segs.push_back({static_cast<std::size_t>(start), csv::parse_double(row[1])});
  }
  return TargetSchedule(std::move(segs));
}

void TargetSchedule::write_csv(const fs::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << "start_chunk,lambda_db\n";
  for (const auto& s : segments_) {
    out << s.start_chunk << ',' << csv::format_double(s.lambda_db) << '\n';
  }
}

double TargetSchedule::lambda_at(std::size_t chunk_index) const {
  const auto it = std::upper_bound(segments_.begin(), segments_.end(), chunk_index,
                                   [](std::size_t c, const Segment& s) { return c < s.start_chunk; });
  return std::prev(it)->lambda_db;
}

std::optional<std::size_t> TargetSchedule::next_change_after(std::size_t chunk_index) const {
  const auto it = std::upper_bound(segments_.begin(), segments_.end(), chunk_index,
                                   [](std::size_t c, const Segment& s) { return c < s.start_chunk; });
  if (it == segments_.end()) {
    return std::nullopt;
  }
  return it->start_chunk;
}

nlohmann::json TargetSchedule::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : segments_) {
    out.push_back({{"start_chunk", s.start_chunk}, {"lambda_db", s.lambda_db}});
  }
  return out;
}

ControllerDecision make_decision(int qp_raw, int decrement, std::string controller_id) {
  check_qp(qp_raw);
  if (decrement < 0 || decrement > kMaxDecrement) {
    throw InvalidArgumentError("decrement must be 0, 1 or 2");
  }
  ControllerDecision d;
  d.qp_raw = qp_raw;
  d.decrement = decrement;
  d.qp_final = std::max(kMinQp, qp_raw - decrement);
  d.controller_id = std::move(controller_id);
  return d;
}

ControllerDecision oracle_select(const RdTable& table, double lambda_db) {
  if (!table.complete()) {
    throw MissingTableError(table.source + " chunk " + std::to_string(table.chunk_id) + ": oracle needs all 52 QPs, have " +
                            std::to_string(table.entries.size()));
  }
  std::optional<int> best;
  for (const auto& [qp, e] : table.entries) {
    if (e.chunk_psnr >= lambda_db && (!best || qp > *best)) {
      best = qp;
    }
  }
  auto d = make_decision(best.value_or(kMinQp), 0, "oracle");
  d.nonconformable = !best.has_value();
  return d;
}

ControllerDecision fixed_select(int qp) {
  auto d = make_decision(qp, 0, "fixed:" + std::to_string(qp));
  return d;
}

ControllerDecision feedback_select(std::span<const FeedbackObservation> history, double lambda_db, int decrement,
                                   const FeedbackParams& params) {
  if (!(lambda_db > 0.0)) {
    throw InvalidArgumentError("feedback_select: lambda must be positive");
  }
  int qp = params.cold_start_qp;
  if (!history.empty()) {
    const auto& last = history.back();
    if (last.chunk_psnr < lambda_db) {
      qp = last.qp - params.backoff;
    } else if (last.chunk_psnr - lambda_db > params.guard_db) {
      qp = last.qp + 1;
    } else {
      qp = last.qp;
    }
  }
  return make_decision(std::clamp(qp, kMinQp, kMaxQp), decrement, "feedback");
}

ControllerDecision learned_select(const fs::path& chunk_path, const VideoMeta& meta, std::size_t num_frames,
                                  double lambda_db, PredictorSession& session, int decrement) {
  if (decrement < 0 || decrement > kMaxDecrement) {
    throw InvalidArgumentError("decrement must be 0, 1 or 2");
  }
  PredictRequest req;
  req.chunk_path = chunk_path.string();
  req.width = meta.width;
  req.height = meta.height;
  req.fps = meta.fps;
  req.num_frames = num_frames;
  req.lambda_db = lambda_db;
  const auto start = std::chrono::steady_clock::now();
  const auto resp = session.predict(req);
  const auto stop = std::chrono::steady_clock::now();
  auto d = make_decision(resp.qp, decrement, "learned");
  d.latency_ms = std::chrono::duration<double, std::milli>(stop - start).count();
  return d;
}

ControllerDecision learned_select(const Chunk& chunk, double lambda_db, PredictorSession& session, int decrement,
                                  const fs::path& scratch_dir) {
  fs::create_directories(scratch_dir);
  const auto path = scratch_dir / ("chunk_" + std::to_string(chunk.chunk_id) + ".yuv");
  write_raw_video(path, chunk.frames, chunk.meta);
  auto d = learned_select(path, chunk.meta, chunk.num_frames(), lambda_db, session, decrement);
  std::error_code ec;
  fs::remove(path, ec);
  return d;
}

namespace {

class OracleController final : public Controller {
 public:
  std::string id() const override { return "oracle"; }
  ControllerDecision decide(const ChunkContext& ctx) override { return oracle_select(ctx.table, ctx.lambda_db); }
};

class FixedController final : public Controller {
 public:
  explicit FixedController(int qp) : qp_(qp) { check_qp(qp); }
  std::string id() const override { return "fixed:" + std::to_string(qp_); }
  ControllerDecision decide(const ChunkContext&) override { return fixed_select(qp_); }

 private:
  int qp_;
};

class FeedbackController final : public Controller {
 public:
  FeedbackController(int decrement, FeedbackParams params, std::string id)
      : decrement_(decrement), params_(params), id_(std::move(id)) {}
  std::string id() const override { return id_; }
  ControllerDecision decide(const ChunkContext& ctx) override {
    auto d = feedback_select(history_, ctx.lambda_db, decrement_, params_);
    d.controller_id = id_;
    return d;
  }
  void observe(const ControllerDecision& d, double chunk_psnr) override {
    history_.push_back({d.qp_raw, chunk_psnr});
  }
  void reset() override { history_.clear(); }

 private:
  int decrement_;
  FeedbackParams params_;
  std::string id_;
  std::vector<FeedbackObservation> history_;
};

class LearnedController final : public Controller {
 public:
  explicit LearnedController(const ControllerSpec& spec) : spec_(spec), id_(spec.id()) {
    session_ = open_session(EndpointSpec::parse(spec.predictor_endpoint), {spec.predictor_timeout});
    scratch_ = spec.scratch_dir.empty() ? fs::temp_directory_path() / ("rtqc-learned-" + std::to_string(::getpid()))
                                        : spec.scratch_dir;
  }
  ~LearnedController() override {
    session_.close();
    if (spec_.scratch_dir.empty()) {
      std::error_code ec;
      fs::remove_all(scratch_, ec);
    }
  }

  std::string id() const override { return id_; }

  ControllerDecision decide(const ChunkContext& ctx) override {
    try {
      ControllerDecision d;
      if (!ctx.table.chunk_path.empty() && fs::exists(ctx.table.chunk_path)) {
        d = learned_select(ctx.table.chunk_path, ctx.chunk.meta, ctx.chunk.num_frames(), ctx.lambda_db, session_,
                           spec_.decrement);
      } else {
        d = learned_select(ctx.chunk, ctx.lambda_db, session_, spec_.decrement, scratch_);
      }
      d.controller_id = id_;
      return d;
    } catch (const Error&) {
      if (spec_.fallback == FallbackPolicy::kAbort) {
        throw;
      }
      auto d = feedback_select(history_, ctx.lambda_db, spec_.decrement, spec_.feedback);
      d.controller_id = id_;
      d.fallback = true;
      return d;
    }
  }
  void observe(const ControllerDecision& d, double chunk_psnr) override {
    history_.push_back({d.qp_raw, chunk_psnr});
  }
  void reset() override { history_.clear(); }

 private:
  ControllerSpec spec_;
  std::string id_;
  PredictorSession session_;
  fs::path scratch_;
  std::vector<FeedbackObservation> history_;
};

}  // namespace

ControllerSpec ControllerSpec::parse(std::string_view text) {
  ControllerSpec s;
  if (text == "oracle") {
    s.kind = Kind::kOracle;
  } else if (text == "feedback") {
    s.kind = Kind::kFeedback;
  } else if (text == "learned") {
    s.kind = Kind::kLearned;
  } else if (text.starts_with("fixed:")) {
    s.kind = Kind::kFixed;
    s.fixed_qp = static_cast<int>(csv::parse_int(text.substr(6)));
    check_qp(s.fixed_qp);
  } else {
    throw InvalidArgumentError("unknown controller '" + std::string(text) + "' (oracle|fixed:N|feedback|learned)");
  }
  return s;
}

std::string ControllerSpec::id() const {
  switch (kind) {
    case Kind::kOracle:
      return "oracle";
    case Kind::kFixed:
      return "fixed:" + std::to_string(fixed_qp);
    case Kind::kFeedback:
      return "feedback/d" + std::to_string(decrement);
    case Kind::kLearned:
      return "learned/d" + std::to_string(decrement);
  }
  return "unknown";
}

nlohmann::json ControllerSpec::to_json() const {
  nlohmann::json j{{"id", id()}};
  switch (kind) {
    case Kind::kOracle:
      j["kind"] = "oracle";
      break;
    case Kind::kFixed:
      j["kind"] = "fixed";
      j["qp"] = fixed_qp;
      break;
    case Kind::kFeedback:
      j["kind"] = "feedback";
      j["decrement"] = decrement;
      j["guard_db"] = feedback.guard_db;
      j["cold_start_qp"] = feedback.cold_start_qp;
      break;
    case Kind::kLearned:
      j["kind"] = "learned";
      j["decrement"] = decrement;
      j["endpoint"] = predictor_endpoint;
      j["fallback"] = fallback == FallbackPolicy::kAbort ? "abort" : "feedback";
      j["timeout_ms"] = predictor_timeout.count();
      break;
  }
  return j;
}

std::unique_ptr<Controller> make_controller(const ControllerSpec& spec) {
  if (spec.decrement < 0 || spec.decrement > kMaxDecrement) {
    throw InvalidArgumentError("decrement must be 0, 1 or 2");
  }
  switch (spec.kind) {
    case ControllerSpec::Kind::kOracle:
      return std::make_unique<OracleController>();
    case ControllerSpec::Kind::kFixed:
      return std::make_unique<FixedController>(spec.fixed_qp);
    case ControllerSpec::Kind::kFeedback:
      return std::make_unique<FeedbackController>(spec.decrement, spec.feedback, spec.id());
    case ControllerSpec::Kind::kLearned:
      if (spec.predictor_endpoint.empty()) {
        throw InvalidArgumentError("learned controller needs a predictor endpoint");
      }
      return std::make_unique<LearnedController>(spec);
  }
  throw InvalidArgumentError("unknown controller kind");
}

}  // namespace rtqc
