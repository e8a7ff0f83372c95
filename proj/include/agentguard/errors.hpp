#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace agentguard {

// Base class for every recoverable error raised by the library. Conditions that
// indicate a bug in the caller (violated preconditions) use std::logic_error
// instead and are not meant to be caught.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  explicit TransportError(const std::string& message, int attempts = 1)
      : Error(message), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

class AuthError : public Error {
 public:
  using Error::Error;
};

class ScriptExhausted : public Error {
 public:
  explicit ScriptExhausted(std::string logical_key, const std::string& message)
      : Error(message), logical_key_(std::move(logical_key)) {}
  const std::string& logical_key() const { return logical_key_; }

 private:
  std::string logical_key_;
};

class MissingBinding : public Error {
 public:
  explicit MissingBinding(std::string name)
      : Error("missing binding for placeholder \"" + name + "\""), name_(std::move(name)) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

class QualityExhausted : public Error {
 public:
  QualityExhausted(std::string last_candidate, std::string last_suggestions)
      : Error("quality review exhausted; last suggestions: " + last_suggestions),
        last_candidate_(std::move(last_candidate)),
        last_suggestions_(std::move(last_suggestions)) {}
  const std::string& last_candidate() const { return last_candidate_; }
  const std::string& last_suggestions() const { return last_suggestions_; }

 private:
  std::string last_candidate_;
  std::string last_suggestions_;
};

class RepairExhausted : public Error {
 public:
  explicit RepairExhausted(std::string last_error)
      : Error("repair attempts exhausted; last error: " + last_error),
        last_error_(std::move(last_error)) {}
  const std::string& last_error() const { return last_error_; }

 private:
  std::string last_error_;
};

class PhaseOutputUnparsable : public Error {
 public:
  using Error::Error;
};

class NoStructuredOutput : public Error {
 public:
  NoStructuredOutput() : Error("no JSON array found in model output") {}
  using Error::Error;
};

class InvalidConstraint : public Error {
 public:
  InvalidConstraint(std::size_t index, std::string reason)
      : Error("constraint " + std::to_string(index) + ": " + reason),
        index_(index),
        reason_(std::move(reason)) {}
  std::size_t index() const { return index_; }
  const std::string& reason() const { return reason_; }

 private:
  std::size_t index_;
  std::string reason_;
};

class NotReproducible : public Error {
 public:
  using Error::Error;
};

class NoEffectfulStep : public Error {
 public:
  using Error::Error;
};

class MissingLabel : public Error {
 public:
  explicit MissingLabel(std::string resource)
      : Error("no type label planned for resource \"" + resource + "\""),
        resource_(std::move(resource)) {}
  const std::string& resource() const { return resource_; }

 private:
  std::string resource_;
};

class SchemaError : public Error {
 public:
  SchemaError(std::string pointer, const std::string& reason)
      : Error(reason + " (at " + pointer + ")"), pointer_(std::move(pointer)) {}
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

class MissingArtifact : public Error {
 public:
  explicit MissingArtifact(std::string file)
      : Error("required artifact file not found: " + file), file_(std::move(file)) {}
  const std::string& file() const { return file_; }

 private:
  std::string file_;
};

class InconsistentEntry : public Error {
 public:
  using Error::Error;
};

}  // namespace agentguard
