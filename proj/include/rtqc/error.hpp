#pragma once

#include <stdexcept>
#include <string>

namespace rtqc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A raw video file is not a whole number of frames, or a frame count disagrees with its metadata.
class SizeMismatchError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument or configuration (geometry, QP range, malformed schedule, ...).
class InvalidArgumentError : public Error {
 public:
  using Error::Error;
};

/// File-system or parse failure on one of the on-disk formats.
class IoError : public Error {
 public:
  using Error::Error;
};

/// An external tool exited nonzero or produced unusable output.
class ExternalToolError : public Error {
 public:
  ExternalToolError(std::string message, int exit_code, std::string diagnostics)
      : Error(std::move(message)), exit_code_(exit_code), diagnostics_(std::move(diagnostics)) {}

  int exit_code() const noexcept { return exit_code_; }
  const std::string& diagnostics() const noexcept { return diagnostics_; }

 private:
  int exit_code_;
  std::string diagnostics_;
};

/// A QP sweep failed; carries the failing QP.
class SweepError : public Error {
 public:
  SweepError(int qp, const std::string& message)
      : Error("qp " + std::to_string(qp) + ": " + message), qp_(qp) {}

  int qp() const noexcept { return qp_; }

 private:
  int qp_;
};

/// RdTables required by a controller or baseline are absent or incomplete.
class MissingTableError : public Error {
 public:
  using Error::Error;
};

/// Predictor protocol violation (malformed line, id mismatch, out-of-range qp).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// The predictor did not answer in time.
class TimeoutError : public Error {
 public:
  using Error::Error;
};

}  // namespace rtqc
