#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace crowdlens {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text input (timestamps, expressions, CSV rows, JSON documents).
/// `offset` is a byte offset for expressions and a 1-based line number for
/// line-oriented formats; which one is documented by the thrower.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset) : Error(what), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// A places document failed validation; `feature_index` is 0-based.
class ValidationError : public Error {
 public:
  ValidationError(const std::string& what, std::size_t feature_index)
      : Error(what), feature_index_(feature_index) {}
  std::size_t feature_index() const { return feature_index_; }

 private:
  std::size_t feature_index_;
};

class UnknownMetricError : public Error {
 public:
  explicit UnknownMetricError(std::string id)
      : Error("unknown metric '" + id + "'"), id_(std::move(id)) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

class CycleError : public Error {
 public:
  explicit CycleError(std::vector<std::string> ids);
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  std::vector<std::string> ids_;
};

/// Sample references a place or metric the store does not know.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ConnectorError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace crowdlens
