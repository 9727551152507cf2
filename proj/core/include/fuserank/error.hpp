#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fuserank {

// Base class for every error the library raises. The CLI maps the two
// families below onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or inconsistent input data (malformed files, dangling ids, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// Numerical failure (non-finite loss, degenerate vectors).
class NumericError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : DataError(source + ":" + std::to_string(line) + ": " + what),
        line_(line) {}
  explicit ParseError(const std::string& what) : DataError(what) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_ = 0;
};

class ZeroVector : public NumericError {
 public:
  explicit ZeroVector(std::size_t row)
      : NumericError("zero vector at row " + std::to_string(row)), row_(row) {}
  explicit ZeroVector(const std::string& what) : NumericError(what) {}

  std::size_t row() const { return row_; }

 private:
  std::size_t row_ = 0;
};

class DimMismatch : public DataError {
 public:
  DimMismatch(std::size_t expected, std::size_t got)
      : DataError("dimension mismatch: expected " + std::to_string(expected) +
                  ", got " + std::to_string(got)) {}
};

class EmptyIndex : public DataError {
 public:
  EmptyIndex() : DataError("search index is empty") {}
};

class InvalidCount : public DataError {
 public:
  using DataError::DataError;
};

class NoEmbedding : public DataError {
 public:
  explicit NoEmbedding(const std::string& id)
      : DataError("no embedding for '" + id + "'") {}
};

class NoPositive : public DataError {
 public:
  explicit NoPositive(const std::string& query_id)
      : DataError("query '" + query_id + "' has no positive judgment") {}
};

class NoRelevant : public DataError {
 public:
  NoRelevant() : DataError("query has no relevant documents") {}
};

class MissingModality : public DataError {
 public:
  explicit MissingModality(const std::string& modality)
      : DataError("missing vector for enabled modality '" + modality + "'") {}
};

class MalformedRun : public DataError {
 public:
  using DataError::DataError;
};

class NonFiniteLoss : public NumericError {
 public:
  NonFiniteLoss(int epoch, std::size_t batch)
      : NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                     ", batch " + std::to_string(batch)),
        epoch_(epoch),
        batch_(batch) {}

  int epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }

 private:
  int epoch_;
  std::size_t batch_;
};

}  // namespace fuserank
