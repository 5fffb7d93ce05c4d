#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace puddle_eval {

using Id = std::int64_t;

// Bad input data: malformed documents, broken references, failed checks.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A record-level validation failure; names the collection and offending id.
class ValidationError : public DataError {
 public:
  ValidationError(std::string collection, std::optional<Id> record_id, const std::string& detail)
      : DataError(format(collection, record_id, detail)),
        collection_(std::move(collection)),
        record_id_(record_id) {}

  const std::string& collection() const noexcept { return collection_; }
  std::optional<Id> record_id() const noexcept { return record_id_; }

 private:
  static std::string format(const std::string& collection, std::optional<Id> id,
                            const std::string& detail) {
    std::string out = collection;
    if (id) out += " id=" + std::to_string(*id);
    return out + ": " + detail;
  }

  std::string collection_;
  std::optional<Id> record_id_;
};

}  // namespace puddle_eval
