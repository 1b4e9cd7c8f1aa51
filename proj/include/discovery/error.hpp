#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace discovery {

// Base of every error raised by the library. The CLI maps these onto a
// nonzero exit status with the message as the structured reason.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(message), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& message)
      : Error("parse", source + ":" + std::to_string(line) + ": " + message), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IngestionError : public Error {
 public:
  explicit IngestionError(const std::string& message) : Error("ingestion", message) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message) : Error("validation", message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("config", message) {}
};

class InferenceError : public Error {
 public:
  explicit InferenceError(const std::string& message) : Error("inference", message) {}
};

class BackendError : public Error {
 public:
  explicit BackendError(const std::string& message) : Error("backend", message) {}
};

}  // namespace discovery
