#include "groundguide/error.hpp"

namespace groundguide {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseFailure: return "ParseFailure";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::UnknownModelId: return "UnknownModelId";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::EmptyObjects: return "EmptyObjects";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::BackendFailure: return "BackendFailure";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::ProtocolViolation: return "ProtocolViolation";
    case ErrorCode::VocabSizeMismatch: return "VocabSizeMismatch";
    case ErrorCode::RemoteError: return "RemoteError";
    case ErrorCode::MissingAnnotation: return "MissingAnnotation";
    case ErrorCode::EmptyVocabulary: return "EmptyVocabulary";
    case ErrorCode::MissingAnswer: return "MissingAnswer";
  }
  return "Unknown";
}

bool is_backend_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::BackendFailure:
    case ErrorCode::Timeout:
    case ErrorCode::ProtocolViolation:
    case ErrorCode::VocabSizeMismatch:
    case ErrorCode::RemoteError:
      return true;
    default:
      return false;
  }
}

}  // namespace groundguide
