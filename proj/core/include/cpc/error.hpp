#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cpc {

enum class ErrorKind {
  EmptyDataset,
  RaggedRow,
  NonNumeric,
  BadFractions,
  BadK,
  BadSpec,
  TooFewSamples,
  DimMismatch,
  BadHyperparams,
  Divergence,
  LengthMismatch,
  LabelOutOfRange,
  EmptyPartition,
  DegenerateModel,
  Io,
  Format,
};

std::string_view to_string(ErrorKind kind);

/// Exception carrying a machine-checkable kind next to the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Thrown by training when the loss stops being finite.
class DivergenceError : public Error {
 public:
  DivergenceError(int epoch, const std::string& what);

  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace cpc
