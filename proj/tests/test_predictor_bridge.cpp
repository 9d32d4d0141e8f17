#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <sstream>
#include <thread>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "rtqc/error.hpp"
#include "rtqc/predictor_bridge.hpp"
#include "support.hpp"

using namespace rtqc;
using fixture::TempDir;
using namespace std::chrono_literals;

namespace {

PredictRequest sample_request() {
  PredictRequest r;
  r.id = 7;
  r.chunk_path = "/tmp/c.yuv";
  r.width = 96;
  r.height = 64;
  r.fps = 25.0;
  r.num_frames = 8;
  r.lambda_db = 38.5;
  return r;
}

PredictorSession stub(const std::string& args, std::chrono::milliseconds timeout = 2000ms) {
  return open_session(EndpointSpec::parse("exec:" + quote_word(RTQC_STUB_PREDICTOR) + " " + args), {timeout});
}

// Accepts one connection and answers with `handler` until the peer hangs up.
class SocketServer {
 public:
  SocketServer(std::filesystem::path path, PredictHandler handler) : path_(std::move(path)) {
    fd_ = ::socket(AF_UNIX, SOCK_STREAM, 0);
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    std::snprintf(addr.sun_path, sizeof(addr.sun_path), "%s", path_.c_str());
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(fd_, 1) != 0) {
      throw std::runtime_error("cannot listen on " + path_.string());
    }
    thread_ = std::thread([this, handler = std::move(handler)] {
      const int c = ::accept(fd_, nullptr, nullptr);
      if (c < 0) {
        return;
      }
      LineChannel chan(c, ::dup(c));
      try {
        while (true) {
          const auto line = chan.read_line(5000ms);
          if (!line) {
            break;
          }
          chan.write_line(handle_request_line(*line, handler));
        }
      } catch (const Error&) {
      }
    });
  }
  ~SocketServer() {
    thread_.join();
    ::close(fd_);
  }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  std::thread thread_;
};

}  // namespace

TEST(Wire, RequestUsesExactKeysAndRoundTrips) {
  const auto line = serialize_request(sample_request());
  const auto j = nlohmann::json::parse(line);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) {
    keys.push_back(k);
  }
  std::sort(keys.begin(), keys.end());
  EXPECT_EQ(keys, (std::vector<std::string>{"chunk", "fps", "h", "id", "lambda_db", "n", "v", "w"}));
  EXPECT_EQ(j["v"], 1);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_EQ(parse_request(line), sample_request());
}

TEST(Wire, ResponseRoundTripAndErrors) {
  const PredictResponse r{3, 31, "m1"};
  EXPECT_EQ(parse_response(serialize_response(r)), r);
  EXPECT_THROW(parse_response("nope"), ProtocolError);
  EXPECT_THROW(parse_response("[1,2]"), ProtocolError);
  EXPECT_THROW(parse_response(R"({"v":2,"id":1,"qp":3,"model":"m"})"), ProtocolError);
  EXPECT_THROW(parse_response(R"({"v":1,"id":1,"qp":52,"model":"m"})"), ProtocolError);
  EXPECT_THROW(parse_response(R"({"v":1,"id":1,"qp":3.5,"model":"m"})"), ProtocolError);
  EXPECT_THROW(parse_response(R"({"v":1,"id":1,"model":"m"})"), ProtocolError);
  EXPECT_THROW(parse_response(serialize_error(1, "bad chunk")), PredictorReportedError);
}

TEST(Wire, LocalValidation) {
  auto r = sample_request();
  EXPECT_NO_THROW(r.validate());
  r.lambda_db = -1;
  EXPECT_THROW(r.validate(), InvalidArgumentError);
  r = sample_request();
  r.chunk_path.clear();
  EXPECT_THROW(r.validate(), InvalidArgumentError);
}

TEST(Endpoint, Parse) {
  const auto e = EndpointSpec::parse("exec:/bin/pred --x 'a b'");
  EXPECT_EQ(e.kind, EndpointSpec::Kind::kExec);
  EXPECT_EQ(e.argv, (std::vector<std::string>{"/bin/pred", "--x", "a b"}));
  EXPECT_EQ(EndpointSpec::parse("pred").argv, std::vector<std::string>{"pred"});
  const auto u = EndpointSpec::parse("unix:/run/p.sock");
  EXPECT_EQ(u.kind, EndpointSpec::Kind::kUnixSocket);
  EXPECT_EQ(u.socket_path, "/run/p.sock");
  EXPECT_THROW(EndpointSpec::parse("unix:"), InvalidArgumentError);
  EXPECT_THROW(EndpointSpec::parse("exec:"), InvalidArgumentError);
}

TEST(Server, HandleRequestLine) {
  const PredictHandler h = [](const PredictRequest& r) { return PredictResponse{0, 26, "echo:" + r.chunk_path}; };
  const auto ok = parse_response(handle_request_line(serialize_request(sample_request()), h));
  EXPECT_EQ(ok.id, 7u);
  EXPECT_EQ(ok.qp, 26);
  const auto bad = nlohmann::json::parse(handle_request_line("garbage", h));
  EXPECT_TRUE(bad.contains("error"));
  EXPECT_TRUE(bad["id"].is_null());
  auto neg = sample_request();
  neg.lambda_db = -3;
  const auto rejected = nlohmann::json::parse(handle_request_line(serialize_request(neg), h));
  EXPECT_EQ(rejected["id"], 7);
  EXPECT_TRUE(rejected.contains("error"));
  const PredictHandler throwing = [](const PredictRequest&) -> PredictResponse { throw std::runtime_error("boom"); };
  EXPECT_NE(handle_request_line(serialize_request(sample_request()), throwing).find("boom"), std::string::npos);
}

TEST(Server, ServeLoop) {
  std::istringstream in(serialize_request(sample_request()) + "\n\n" + "junk\n");
  std::ostringstream out;
  serve_predictor(in, out, [](const PredictRequest&) { return PredictResponse{0, 12, "m"}; });
  std::istringstream lines(out.str());
  std::string a;
  std::string b;
  std::getline(lines, a);
  std::getline(lines, b);
  EXPECT_EQ(parse_response(a).qp, 12);
  EXPECT_THROW(parse_response(b), PredictorReportedError);
}

TEST(Session, EchoStubAnswersEveryRequest) {
  auto s = stub("--fixed-qp 26");
  for (int i = 0; i < 20; ++i) {
    auto r = sample_request();
    r.id = 0;
    r.lambda_db = 20 + i;
    const auto resp = s.predict(r);
    EXPECT_EQ(resp.qp, 26);
    EXPECT_EQ(resp.id, static_cast<std::uint64_t>(i + 1));
  }
  EXPECT_TRUE(s.is_open());
  close_session(s);
  EXPECT_FALSE(s.is_open());
  EXPECT_THROW(s.predict(sample_request()), IoError);
}

TEST(Session, InvalidRequestRejectedBeforeSend) {
  auto s = stub("--fixed-qp 26");
  auto r = sample_request();
  r.lambda_db = -1;
  EXPECT_THROW(s.predict(r), InvalidArgumentError);
  EXPECT_FALSE(s.poisoned());
  EXPECT_EQ(s.predict(sample_request()).qp, 26);
}

TEST(Session, TimeoutPoisons) {
  auto s = stub("--delay-ms 400", 50ms);
  EXPECT_THROW(s.predict(sample_request()), TimeoutError);
  EXPECT_TRUE(s.poisoned());
  EXPECT_THROW(s.predict(sample_request()), ProtocolError);
}

TEST(Session, MalformedReplyPoisons) {
  auto s = stub("--garbage");
  EXPECT_THROW(s.predict(sample_request()), ProtocolError);
  EXPECT_TRUE(s.poisoned());
}

TEST(Session, ReportedErrorKeepsSessionUsable) {
  TempDir dir;
  // oracle-backed stub with an empty table directory: every lookup fails
  std::filesystem::create_directories(dir / "tables");
  auto s = stub("--tables " + quote_word((dir / "tables").string()));
  EXPECT_THROW(s.predict(sample_request()), PredictorReportedError);
  EXPECT_FALSE(s.poisoned());
  EXPECT_THROW(s.predict(sample_request()), PredictorReportedError);
}

TEST(Session, DeadPeerIsAnError) {
  auto s = open_session(EndpointSpec::parse("exec:true"), {500ms});
  std::this_thread::sleep_for(50ms);
  EXPECT_THROW(s.predict(sample_request()), Error);
  EXPECT_TRUE(s.poisoned());
}

TEST(Session, MissingExecutable) {
  EXPECT_THROW(open_session(EndpointSpec::parse("exec:/nonexistent/predictor")), Error);
}

TEST(Session, UnixSocket) {
  TempDir dir;
  const auto path = dir / "p.sock";
  {
    SocketServer server(path, [](const PredictRequest& r) {
      return PredictResponse{0, static_cast<int>(r.lambda_db), "sock"};
    });
    auto s = open_session(EndpointSpec::parse("unix:" + path.string()));
    auto r = sample_request();
    r.id = 0;
    r.lambda_db = 33;
    const auto resp = s.predict(r);
    EXPECT_EQ(resp.qp, 33);
    EXPECT_EQ(resp.model_id, "sock");
    r.lambda_db = 40;
    EXPECT_EQ(s.predict(r).qp, 40);
    s.close();
  }
  EXPECT_THROW(open_session(EndpointSpec::parse("unix:" + (dir / "absent.sock").string())), Error);
}
