#include "noiselearn/errors.hpp"

namespace noiselearn {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "dimension mismatch";
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::NonFinite: return "non-finite value";
    case ErrorCode::Overflow: return "overflow";
    case ErrorCode::ZeroVariance: return "zero variance";
    case ErrorCode::Unimodal: return "unimodal trace";
    case ErrorCode::EmptyInput: return "empty input";
    case ErrorCode::Parse: return "parse error";
    case ErrorCode::Io: return "io error";
    case ErrorCode::ColdBuffer: return "cold buffer";
    case ErrorCode::TransportClosed: return "transport closed";
    case ErrorCode::Config: return "config error";
  }
  return "unknown";
}

}  // namespace noiselearn
