#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace tripleval {

// Base for every error the library raises on purpose. Anything else escaping
// a stage is a bug.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated structural precondition (duplicate ids, mismatched counts, mixed
// cells).
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Input data that breaks a corpus or report invariant.
class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Endpoint unreachable or retries exhausted.
class TransportError : public Error {
 public:
  TransportError(std::string endpoint, const std::string& what)
      : Error(endpoint + ": " + what), endpoint_(std::move(endpoint)) {}
  const std::string& endpoint() const { return endpoint_; }

 private:
  std::string endpoint_;
};

// Server rejected a structured-output request.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// Server answered with a malformed or inconsistent payload.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// LLM output that could not be parsed into the expected records.
class ParseError : public Error {
 public:
  using Error::Error;
};

class ExtractionError : public Error {
 public:
  ExtractionError(const std::string& what, std::string raw_output)
      : Error(what), raw_output_(std::move(raw_output)) {}
  const std::string& raw_output() const { return raw_output_; }

 private:
  std::string raw_output_;
};

class JudgeError : public Error {
 public:
  JudgeError(const std::string& what, std::string batch_id)
      : Error(what), batch_id_(std::move(batch_id)) {}
  const std::string& batch_id() const { return batch_id_; }

 private:
  std::string batch_id_;
};

// Human labels do not cover every sampled item.
class IncompleteLabelsError : public Error {
 public:
  explicit IncompleteLabelsError(std::vector<std::string> task_ids)
      : Error(describe(task_ids)), task_ids_(std::move(task_ids)) {}
  const std::vector<std::string>& task_ids() const { return task_ids_; }

 private:
  static std::string describe(const std::vector<std::string>& ids) {
    std::string msg = "missing labels for " + std::to_string(ids.size()) + " task(s):";
    for (const auto& id : ids) msg += " " + id;
    return msg;
  }
  std::vector<std::string> task_ids_;
};

}  // namespace tripleval
