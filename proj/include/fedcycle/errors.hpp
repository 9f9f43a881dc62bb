#pragma once

#include <stdexcept>
#include <string>

namespace fedcycle {

/// Invalid or inconsistent configuration supplied by the user.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem failure (unreadable input, unwritable output path).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed data file. `field` names the offending part of the format.
class DataError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, Truncated, CountMismatch };

  DataError(Kind kind, std::string field, const std::string& what)
      : std::runtime_error(what), kind_(kind), field_(std::move(field)) {}

  Kind kind() const { return kind_; }
  const std::string& field() const { return field_; }

 private:
  Kind kind_;
  std::string field_;
};

/// Non-finite loss or gradient during local training. Round context is
/// attached by the orchestrator (-1 when unknown).
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, int round, int client_id)
      : std::runtime_error(what), round_(round), client_id_(client_id) {}

  int round() const { return round_; }
  int client_id() const { return client_id_; }

 private:
  int round_;
  int client_id_;
};

}  // namespace fedcycle
