#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ssn {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Non-finite value where a finite one was required (loss, gradient, norm).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A token sequence that is empty where a sentence is required.
class EmptySentence : public Error {
 public:
  EmptySentence() : Error("empty sentence: no tokens to encode") {}
  explicit EmptySentence(const std::string& what) : Error(what) {}
};

/// Zero-norm embedding passed to a cosine-based measure.
class DegenerateEmbedding : public Error {
 public:
  DegenerateEmbedding() : Error("degenerate embedding: zero norm") {}
};

class ScorerRangeMismatch : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Carries the 1-based line number when known (0 otherwise).
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class CheckpointVersionMismatch : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointShapeMismatch : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class VocabularyHashMismatch : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class TruncatedCheckpoint : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

}  // namespace ssn
