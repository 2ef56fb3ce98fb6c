#include "cpc/error.hpp"

namespace cpc {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::RaggedRow: return "RaggedRow";
    case ErrorKind::NonNumeric: return "NonNumeric";
    case ErrorKind::BadFractions: return "BadFractions";
    case ErrorKind::BadK: return "BadK";
    case ErrorKind::BadSpec: return "BadSpec";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::BadHyperparams: return "BadHyperparams";
    case ErrorKind::Divergence: return "Divergence";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::EmptyPartition: return "EmptyPartition";
    case ErrorKind::DegenerateModel: return "DegenerateModel";
    case ErrorKind::Io: return "Io";
    case ErrorKind::Format: return "Format";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

DivergenceError::DivergenceError(int epoch, const std::string& what)
    : Error(ErrorKind::Divergence, what + " (epoch " + std::to_string(epoch) + ")"),
      epoch_(epoch) {}

}  // namespace cpc
