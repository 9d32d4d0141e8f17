#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <sys/types.h>
#include <vector>

namespace rtqc {

/// Splits a command line into argv words. Supports single quotes, double quotes and
/// backslash escapes; performs no expansion of any kind.
std::vector<std::string> split_command(std::string_view command);

/// Quotes a word so split_command reproduces it.
std::string quote_word(std::string_view word);

struct ProcessResult {
  int exit_code = -1;
  /// Interleaved stdout and stderr.
  std::string output;
};

/// fork/exec argv[0] (PATH lookup), wait, capture output. Throws ExternalToolError if it cannot start.
ProcessResult run_process(const std::vector<std::string>& argv);

/// Resolves an executable name against PATH; returns nullopt when not found.
std::optional<std::string> which(std::string_view name);

/// Newline-delimited text over a pair of file descriptors. Owns the descriptors.
class LineChannel {
 public:
  LineChannel() = default;
  LineChannel(int read_fd, int write_fd);
  ~LineChannel();
  LineChannel(LineChannel&& other) noexcept;
  LineChannel& operator=(LineChannel&& other) noexcept;
  LineChannel(const LineChannel&) = delete;
  LineChannel& operator=(const LineChannel&) = delete;

  /// Appends '\n'. Throws IoError if the peer is gone.
  void write_line(std::string_view line);
  /// Returns nullopt on timeout; throws IoError on EOF or read failure.
  std::optional<std::string> read_line(std::chrono::milliseconds timeout);
  void close();
  bool is_open() const { return read_fd_ >= 0 || write_fd_ >= 0; }

 private:
  int read_fd_ = -1;
  int write_fd_ = -1;
  std::string buffer_;
};

/// A child process whose stdin/stdout are connected to a LineChannel. stderr is inherited.
class ChildProcess {
 public:
  static ChildProcess spawn(const std::vector<std::string>& argv);

  ChildProcess() = default;
  ~ChildProcess();
  ChildProcess(ChildProcess&& other) noexcept;
  ChildProcess& operator=(ChildProcess&& other) noexcept;
  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  LineChannel& channel() { return channel_; }
  pid_t pid() const { return pid_; }
  /// Closes stdin, waits up to grace for exit, then kills. Returns exit status (or -1).
  int terminate(std::chrono::milliseconds grace = std::chrono::milliseconds(500));

 private:
  pid_t pid_ = -1;
  LineChannel channel_;
};

/// Connects to a Unix-domain stream socket.
LineChannel connect_unix_socket(const std::string& path);

}  // namespace rtqc
