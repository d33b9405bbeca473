#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace groundguide {

enum class ErrorCode {
  InvalidArgument,
  ParseFailure,
  IoError,
  UnknownModelId,
  EmptyInput,
  EmptyObjects,
  LengthMismatch,
  BackendFailure,
  Timeout,
  ProtocolViolation,
  VocabSizeMismatch,
  RemoteError,
  MissingAnnotation,
  EmptyVocabulary,
  MissingAnswer,
};

std::string_view to_string(ErrorCode code);

// True for errors raised by a model backend or the transport underneath it.
bool is_backend_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Error(ErrorCode code, const std::string& message, ErrorCode cause,
        std::size_t step)
      : std::runtime_error(message), code_(code), cause_(cause), step_(step) {}

  ErrorCode code() const noexcept { return code_; }

  // Set on BackendFailure raised from inside a generation loop.
  std::optional<ErrorCode> cause() const noexcept { return cause_; }
  std::optional<std::size_t> step() const noexcept { return step_; }

 private:
  ErrorCode code_;
  std::optional<ErrorCode> cause_;
  std::optional<std::size_t> step_;
};

}  // namespace groundguide
