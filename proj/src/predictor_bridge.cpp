#include "rtqc/predictor_bridge.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "rtqc/encoder_driver.hpp"

namespace rtqc {

using ordered_json = nlohmann::ordered_json;

void PredictRequest::validate() const {
  if (!(lambda_db > 0.0) || !std::isfinite(lambda_db)) {
    throw InvalidArgumentError("predict request: lambda_db must be positive, got " + std::to_string(lambda_db));
  }
  if (chunk_path.empty()) {
    throw InvalidArgumentError("predict request: empty chunk path");
  }
  if (width <= 0 || height <= 0 || num_frames == 0 || !(fps > 0.0)) {
    throw InvalidArgumentError("predict request: invalid chunk geometry");
  }
}

std::string serialize_request(const PredictRequest& req) {
  ordered_json j;
  j["v"] = kPredictorProtocolVersion;
  j["id"] = req.id;
  j["chunk"] = req.chunk_path;
  j["w"] = req.width;
  j["h"] = req.height;
  j["fps"] = req.fps;
  j["n"] = req.num_frames;
  j["lambda_db"] = req.lambda_db;
  return j.dump();
}

namespace {

nlohmann::json parse_object(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ProtocolError(std::string("malformed line: ") + e.what());
  }
  if (!j.is_object()) {
    throw ProtocolError("message is not a JSON object");
  }
  if (!j.contains("v") || !j["v"].is_number_integer() || j["v"].get<int>() != kPredictorProtocolVersion) {
    throw ProtocolError("unsupported or missing protocol version");
  }
  return j;
}

template <typename T>
T field(const nlohmann::json& j, const char* name) {
  try {
    return j.at(name).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("field '") + name + "': " + e.what());
  }
}

}  // namespace

PredictRequest parse_request(std::string_view line) {
  const auto j = parse_object(line);
  PredictRequest r;
  r.id = field<std::uint64_t>(j, "id");
  r.chunk_path = field<std::string>(j, "chunk");
  r.width = field<int>(j, "w");
  r.height = field<int>(j, "h");
  r.fps = field<double>(j, "fps");
  r.num_frames = field<std::size_t>(j, "n");
  r.lambda_db = field<double>(j, "lambda_db");
  return r;
}

std::string serialize_response(const PredictResponse& resp) {
  ordered_json j;
  j["v"] = kPredictorProtocolVersion;
  j["id"] = resp.id;
  j["qp"] = resp.qp;
  j["model"] = resp.model_id;
  return j.dump();
}

PredictResponse parse_response(std::string_view line) {
  const auto j = parse_object(line);
  if (j.contains("error")) {
    throw PredictorReportedError("predictor error: " + j["error"].dump());
  }
  PredictResponse r;
  r.id = field<std::uint64_t>(j, "id");
  if (!j.contains("qp") || !j["qp"].is_number_integer()) {
    throw ProtocolError("field 'qp' missing or not an integer");
  }
  r.qp = j["qp"].get<int>();
  if (r.qp < kMinQp || r.qp > kMaxQp) {
    throw ProtocolError("qp " + std::to_string(r.qp) + " outside [0, 51]");
  }
  r.model_id = field<std::string>(j, "model");
  return r;
}

std::string serialize_error(std::optional<std::uint64_t> id, std::string_view message) {
  ordered_json j;
  j["v"] = kPredictorProtocolVersion;
  if (id) {
    j["id"] = *id;
  } else {
    j["id"] = nullptr;
  }
  j["error"] = message;
  return j.dump();
}

EndpointSpec EndpointSpec::parse(std::string_view spec) {
  EndpointSpec e;
  if (spec.starts_with("unix:")) {
    e.kind = Kind::kUnixSocket;
    e.socket_path = std::string(spec.substr(5));
    if (e.socket_path.empty()) {
      throw InvalidArgumentError("unix endpoint needs a socket path");
    }
    return e;
  }
  if (spec.starts_with("exec:")) {
    spec.remove_prefix(5);
  }
  e.kind = Kind::kExec;
  e.argv = split_command(spec);
  if (e.argv.empty()) {
    throw InvalidArgumentError("exec endpoint needs a command");
  }
  return e;
}

PredictorSession open_session(const EndpointSpec& endpoint, const SessionOptions& options) {
  PredictorSession s;
  s.options_ = options;
  if (endpoint.kind == EndpointSpec::Kind::kUnixSocket) {
    s.socket_ = connect_unix_socket(endpoint.socket_path);
  } else {
    s.child_.emplace(ChildProcess::spawn(endpoint.argv));
  }
  return s;
}

void close_session(PredictorSession& session) { session.close(); }

PredictorSession::~PredictorSession() { close(); }

LineChannel& PredictorSession::channel() { return child_ ? child_->channel() : socket_; }

bool PredictorSession::is_open() const { return child_ ? child_->pid() >= 0 : socket_.is_open(); }

void PredictorSession::close() {
  if (child_) {
    child_->terminate();
    child_.reset();
  }
  socket_.close();
}

PredictResponse PredictorSession::predict(PredictRequest req) {
  if (poisoned_) {
    throw ProtocolError("predictor session is poisoned by an earlier protocol violation");
  }
  if (!is_open()) {
    throw IoError("predictor session is closed");
  }
  if (req.id == 0) {
    req.id = next_id_++;
  } else {
    next_id_ = std::max(next_id_, req.id + 1);
  }
  req.validate();
  auto& chan = channel();
  try {
    chan.write_line(serialize_request(req));
    const auto line = chan.read_line(options_.timeout);
    if (!line) {
      throw TimeoutError("predictor did not reply within " + std::to_string(options_.timeout.count()) + " ms");
    }
    const PredictResponse resp = parse_response(*line);
    if (resp.id != req.id) {
      throw ProtocolError("response id " + std::to_string(resp.id) + " does not match request id " +
                          std::to_string(req.id));
    }
    return resp;
  } catch (const PredictorReportedError&) {
    throw;
  } catch (const Error&) {
    poisoned_ = true;
    throw;
  }
}

std::string handle_request_line(std::string_view line, const PredictHandler& handler) {
  std::optional<std::uint64_t> id;
  try {
    const auto j = nlohmann::json::parse(line);
    if (j.is_object() && j.contains("id") && j["id"].is_number_unsigned()) {
      id = j["id"].get<std::uint64_t>();
    }
  } catch (const nlohmann::json::exception&) {
  }
  try {
    const auto req = parse_request(line);
    req.validate();
    auto resp = handler(req);
    resp.id = req.id;
    return serialize_response(resp);
  } catch (const std::exception& e) {
    return serialize_error(id, e.what());
  }
}

void serve_predictor(std::istream& in, std::ostream& out, const PredictHandler& handler) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    out << handle_request_line(line, handler) << '\n';
    out.flush();
  }
}

}  // namespace rtqc
