#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtqc/predictor_bridge.hpp"
#include "rtqc/rd_table.hpp"
#include "rtqc/video_io.hpp"

namespace rtqc {

/// Piecewise-constant PSNR threshold, indexed by chunk position within a stream.
class TargetSchedule {
 public:
  struct Segment {
    std::size_t start_chunk = 0;
    double lambda_db = 0.0;

    bool operator==(const Segment&) const = default;
  };

  explicit TargetSchedule(std::vector<Segment> segments);
  static TargetSchedule constant(double lambda_db);
  /// CSV rows `start_chunk,lambda_db`; a header row is optional.
  static TargetSchedule from_csv(const std::filesystem::path& path);
  void write_csv(const std::filesystem::path& path) const;

  double lambda_at(std::size_t chunk_index) const;
  /// First segment start strictly after `chunk_index`, if any.
  std::optional<std::size_t> next_change_after(std::size_t chunk_index) const;
  const std::vector<Segment>& segments() const { return segments_; }
  nlohmann::json to_json() const;

 private:
  std::vector<Segment> segments_;
};

inline constexpr int kMaxDecrement = 2;

struct ControllerDecision {
  int qp_raw = 0;
  int decrement = 0;
  /// max(0, qp_raw - decrement)
  int qp_final = 0;
  std::string controller_id;
  /// No QP reaches lambda; encoded at QP 0 and counted as non-conforming.
  bool nonconformable = false;
  /// The learned predictor failed and the feedback rule decided instead.
  bool fallback = false;
  double latency_ms = 0.0;
};

ControllerDecision make_decision(int qp_raw, int decrement, std::string controller_id);

/// Largest QP whose measured PSNR reaches lambda, by exhaustive scan over all 52 entries.
ControllerDecision oracle_select(const RdTable& table, double lambda_db);

ControllerDecision fixed_select(int qp);

struct FeedbackObservation {
  /// The undecremented QP the controller asked for.
  int qp = 0;
  double chunk_psnr = 0.0;
};

struct FeedbackParams {
  double guard_db = 0.5;
  int cold_start_qp = 26;
  /// QP step back after a non-conforming chunk.
  int backoff = 2;
};

/// Causal rule: cold start at 26; after a non-conforming chunk step back by 2; after a chunk that
/// cleared lambda by more than the guard margin step up by 1; otherwise hold.
ControllerDecision feedback_select(std::span<const FeedbackObservation> history, double lambda_db, int decrement = 0,
                                   const FeedbackParams& params = {});

/// Asks the predictor for a QP and applies the decrement. Records predictor round-trip latency.
ControllerDecision learned_select(const std::filesystem::path& chunk_path, const VideoMeta& meta,
                                  std::size_t num_frames, double lambda_db, PredictorSession& session, int decrement);
/// Writes the chunk's frames to `scratch_dir` first.
ControllerDecision learned_select(const Chunk& chunk, double lambda_db, PredictorSession& session, int decrement,
                                  const std::filesystem::path& scratch_dir);

struct ChunkContext {
  const Chunk& chunk;
  const RdTable& table;
  double lambda_db;
};

/// Stateful per-stream QP policy.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string id() const = 0;
  virtual ControllerDecision decide(const ChunkContext& ctx) = 0;
  virtual void observe(const ControllerDecision& /*decision*/, double /*chunk_psnr*/) {}
  /// Called at the start of every stream.
  virtual void reset() {}
};

enum class FallbackPolicy { kAbort, kFeedback };

struct ControllerSpec {
  enum class Kind { kOracle, kFixed, kFeedback, kLearned };
  Kind kind = Kind::kOracle;
  int fixed_qp = 26;
  int decrement = 1;
  FeedbackParams feedback;
  std::string predictor_endpoint;
  FallbackPolicy fallback = FallbackPolicy::kAbort;
  std::chrono::milliseconds predictor_timeout{2000};
  std::filesystem::path scratch_dir;

  /// "oracle" | "fixed:N" | "feedback" | "learned"
  static ControllerSpec parse(std::string_view text);
  std::string id() const;
  nlohmann::json to_json() const;
};

std::unique_ptr<Controller> make_controller(const ControllerSpec& spec);

}  // namespace rtqc
