#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gengan {

/// Base of every error raised by the library. `exit_code()` is the process
/// exit status the CLI reports for it.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

class InvalidInput : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class ParseError : public InvalidInput {
 public:
  ParseError(std::size_t line, const std::string& what)
      : InvalidInput("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class MissingAsset : public Error {
 public:
  explicit MissingAsset(std::string path)
      : Error("missing asset: " + path), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }
  int exit_code() const noexcept override { return 3; }

 private:
  std::string path_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t epoch, std::size_t batch)
      : Error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
              std::to_string(batch)),
        epoch_(epoch),
        batch_(batch) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }
  int exit_code() const noexcept override { return 4; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

/// Wraps an error raised inside a named evaluation stage. The original
/// exit code is preserved.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause)
      : Error(stage + ": " + cause.what()), stage_(std::move(stage)), code_(cause.exit_code()) {}
  const std::string& stage() const noexcept { return stage_; }
  int exit_code() const noexcept override { return code_; }

 private:
  std::string stage_;
  int code_;
};

}  // namespace gengan
