#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace remixlab {

using SampleId = std::uint32_t;

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A value violates a documented constraint (spec fields, fractions, distributions).
class ValidationError : public Error {
public:
  ValidationError(std::string constraint, const std::string& message)
      : Error(message), constraint_(std::move(constraint)) {}
  const std::string& constraint() const noexcept { return constraint_; }

private:
  std::string constraint_;
};

/// Tensor shapes do not chain.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// Errors tied to one sample of a batch (evaluation of a masked modality,
/// non-finite loss).
class SampleError : public Error {
public:
  SampleError(const std::string& message, std::optional<SampleId> id)
      : Error(id ? message + " (sample " + std::to_string(*id) + ")" : message), id_(id) {}
  std::optional<SampleId> sample_id() const noexcept { return id_; }

private:
  std::optional<SampleId> id_;
};

class EvaluationError : public SampleError {
public:
  using SampleError::SampleError;
};

class GradientError : public SampleError {
public:
  using SampleError::SampleError;
};

class PartitionError : public Error {
public:
  using Error::Error;
};

/// Experiment configuration problem; carries the offending field.
class ConfigError : public Error {
public:
  ConfigError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

class IoError : public Error {
public:
  using Error::Error;
};

}  // namespace remixlab
