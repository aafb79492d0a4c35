#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "crowdlens/time.hpp"

struct sqlite3;

namespace crowdlens {

struct ApiKeyRecord {
  std::string key_id;
  /// Hex of salt followed by the keyed BLAKE2b-256 digest of the secret.
  std::string secret_hash;
  std::string label;
  bool revoked = false;
  Timestamp created_at;
};

/// Returned once by KeyStore::add; the secret is never stored.
struct IssuedKey {
  std::string key_id;
  std::string secret;
  std::string token() const { return key_id + "." + secret; }
};

/// API keys in a single-file SQLite database. Only salted one-way hashes of
/// secrets are persisted; verification compares digests in constant time.
class KeyStore {
 public:
  explicit KeyStore(const std::filesystem::path& path);
  ~KeyStore();
  KeyStore(const KeyStore&) = delete;
  KeyStore& operator=(const KeyStore&) = delete;

  IssuedKey add(std::string_view label);
  /// Throws Error for an unknown key id.
  void revoke(std::string_view key_id);
  std::vector<ApiKeyRecord> list() const;

  /// `token` is `<key_id>.<secret>`. Returns the key id when the record
  /// exists, is not revoked and the secret matches.
  std::optional<std::string> authenticate(std::string_view token) const;
  bool is_active(std::string_view key_id) const;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::optional<ApiKeyRecord> find(std::string_view key_id) const;

  std::filesystem::path path_;
  sqlite3* db_ = nullptr;
  mutable std::mutex mutex_;
};

}  // namespace crowdlens
