#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace imupose {

enum class ErrorKind {
  kInvalidArgument,
  kDegenerateInput,
  kDegenerateOutput,
  kUnsupportedUpsample,
  kCalibrationFailed,
  kIncompleteFrame,
  kInternalInvariant,
  kInvalidState,
  kTrainingDiverged,
  kTruncatedFile,
  kBadMagic,
  kVersionMismatch,
  kCorruptFile,
  kIo,
  kProtocol,
};

std::string_view to_string(ErrorKind kind);

// Every failure surfaced by the library carries one of the kinds above so that
// callers (and tests) can branch on the category rather than the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised by outputs_to_pose when a joint block cannot be projected.
class DegenerateOutputError : public Error {
 public:
  DegenerateOutputError(int joint, const std::string& message)
      : Error(ErrorKind::kDegenerateOutput, message), joint_(joint) {}

  int joint() const noexcept { return joint_; }

 private:
  int joint_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace imupose
