#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace neurochat {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Caller broke a documented precondition (wrong epoch length, empty band, ...).
struct ContractViolation : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

// Non-finite sample reached a filter.
struct StreamQualityError : Error {
  StreamQualityError(const std::string& what, std::size_t index)
      : Error(what + " (sample " + std::to_string(index) + ")"), sample_index(index) {}
  std::size_t sample_index;
};

// No valid value inside a sliding window.
struct StaleScore : Error {
  using Error::Error;
};

struct CalibrationError : Error {
  using Error::Error;
};

struct DegenerateCalibration : CalibrationError {
  using CalibrationError::CalibrationError;
};

struct QualityError : CalibrationError {
  using CalibrationError::CalibrationError;
};

struct ProtocolError : Error {
  using Error::Error;
};

struct FormatError : Error {
  using Error::Error;
};

struct GatewayError : Error {
  GatewayError(const std::string& what, int status = 0) : Error(what), http_status(status) {}
  int http_status;
};

}  // namespace neurochat
