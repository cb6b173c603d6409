#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace berwald {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed expression text. `offset` is the byte offset of the offending token.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at byte " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Evaluation outside the mathematical domain (log of a non-positive number, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Mismatched sizes or unsupported dimensions.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// The metric is not a valid Finsler metric at the queried (x, y).
class InvalidMetricError : public Error {
 public:
  using Error::Error;
};

/// A numerical precondition failed (non-SPD matrix, singular frame, ...).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Configuration file problems; `field` is the JSON path of the offending entry.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : Error(field + ": " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Wraps a failure inside the per-point pipeline with the stage where it happened.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace berwald
