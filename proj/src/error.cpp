#include "vulndet/error.hpp"

namespace vulndet {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::IdOutOfRange: return "IdOutOfRange";
    case ErrorCode::InputTooShort: return "InputTooShort";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::NotEnoughPoints: return "NotEnoughPoints";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::NoVulnerableSamples: return "NoVulnerableSamples";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::IncompatibleSpec: return "IncompatibleSpec";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::SpecCorrupt: return "SpecCorrupt";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::VocabHashMismatch: return "VocabHashMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace vulndet
