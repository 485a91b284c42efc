#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace numprobe {

// Process exit codes shared by the CLI and the error hierarchy below.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kData = 2,
  kNumeric = 3,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept = 0;
};

// Invalid configuration: unknown family, bad scale, out-of-range option.
class ConfigError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kUsage; }
};

// Invalid input data: empty series, non-finite values, dimension mismatch.
class InputError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kData; }
};

// Malformed dataset or checkpoint file.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what,
                       std::optional<std::uint64_t> record = std::nullopt)
      : Error(record ? what + " (record " + std::to_string(*record) + ")"
                     : what),
        record_(record) {}
  ExitCode exit_code() const noexcept override { return ExitCode::kData; }
  std::optional<std::uint64_t> record_index() const noexcept {
    return record_;
  }

 private:
  std::optional<std::uint64_t> record_;
};

// NaN/inf loss during training, singular kernel matrix after retries.
class NumericError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kNumeric; }
};

}  // namespace numprobe
