#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rtqc/error.hpp"
#include "rtqc/process.hpp"

namespace rtqc {

inline constexpr int kPredictorProtocolVersion = 1;

/// `{"v":1,"id":…,"chunk":…,"w":…,"h":…,"fps":…,"n":…,"lambda_db":…}`
struct PredictRequest {
  std::uint64_t id = 0;
  std::string chunk_path;
  int width = 0;
  int height = 0;
  double fps = 0.0;
  std::size_t num_frames = 0;
  double lambda_db = 0.0;

  /// Field-level checks only; does not touch the file system.
  void validate() const;
  bool operator==(const PredictRequest&) const = default;
};

/// `{"v":1,"id":…,"qp":…,"model":…}`
struct PredictResponse {
  std::uint64_t id = 0;
  int qp = 0;
  std::string model_id;

  bool operator==(const PredictResponse&) const = default;
};

/// The predictor answered with `{"v":1,"id":…,"error":…}`. The session remains usable.
class PredictorReportedError : public Error {
 public:
  using Error::Error;
};

std::string serialize_request(const PredictRequest& req);
PredictRequest parse_request(std::string_view line);
std::string serialize_response(const PredictResponse& resp);
/// Throws ProtocolError on malformed or out-of-range content, PredictorReportedError on an error reply.
PredictResponse parse_response(std::string_view line);
std::string serialize_error(std::optional<std::uint64_t> id, std::string_view message);

/// `exec:<command line>` spawns a process speaking over stdio; `unix:<path>` connects to a socket.
/// A spec without a scheme is treated as `exec:`.
struct EndpointSpec {
  enum class Kind { kExec, kUnixSocket };
  Kind kind = Kind::kExec;
  std::vector<std::string> argv;
  std::string socket_path;

  static EndpointSpec parse(std::string_view spec);
};

struct SessionOptions {
  std::chrono::milliseconds timeout{2000};
};

/// Strict request-reply: one request in flight. Any protocol violation or timeout poisons the
/// session and every later predict() throws ProtocolError.
class PredictorSession {
 public:
  PredictorSession() = default;
  PredictorSession(PredictorSession&&) noexcept = default;
  PredictorSession& operator=(PredictorSession&&) noexcept = default;
  ~PredictorSession();

  /// Assigns the next request id when `req.id == 0`. Validates locally before sending.
  PredictResponse predict(PredictRequest req);
  void close();
  bool is_open() const;
  bool poisoned() const { return poisoned_; }

 private:
  friend PredictorSession open_session(const EndpointSpec& endpoint, const SessionOptions& options);

  LineChannel& channel();

  std::optional<ChildProcess> child_;
  LineChannel socket_;
  SessionOptions options_;
  std::uint64_t next_id_ = 1;
  bool poisoned_ = false;
};

PredictorSession open_session(const EndpointSpec& endpoint, const SessionOptions& options = {});
void close_session(PredictorSession& session);

using PredictHandler = std::function<PredictResponse(const PredictRequest&)>;

/// Server side of one request line: the reply to send back. Malformed input and handler
/// exceptions become error replies.
std::string handle_request_line(std::string_view line, const PredictHandler& handler);
/// Serves until EOF on `in`.
void serve_predictor(std::istream& in, std::ostream& out, const PredictHandler& handler);

}  // namespace rtqc
