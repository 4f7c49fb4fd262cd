#pragma once

#include <stdexcept>
#include <string>

namespace docrag {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed manifest or record; carries the 1-based line number when known.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DuplicateIdError : public Error {
 public:
  explicit DuplicateIdError(const std::string& id)
      : Error("duplicate doc_id: " + id), id_(id) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class EmptySelection : public Error {
 public:
  EmptySelection() : Error("no selected index is within the candidate set") {}
};

class DegenerateBox : public Error {
 public:
  using Error::Error;
};

class RasterError : public Error {
 public:
  using Error::Error;
};

class StepAfterTermination : public Error {
 public:
  StepAfterTermination() : Error("session already terminated") {}
};

/// Transport or protocol failure while talking to a policy, judge or retriever.
class TransportError : public Error {
 public:
  using Error::Error;
};

class TrainingDivergence : public Error {
 public:
  using Error::Error;
};

}  // namespace docrag
