#include "crowdlens/keystore.hpp"

#include <chrono>

#include <sodium.h>
#include <sqlite3.h>

#include "crowdlens/error.hpp"

namespace crowdlens {
namespace {

constexpr std::size_t kSaltBytes = 16;
constexpr std::size_t kDigestBytes = 32;
constexpr std::size_t kSecretBytes = 32;
constexpr std::size_t kKeyIdBytes = 8;

void init_sodium() {
  static const int rc = sodium_init();
  if (rc < 0) throw Error("libsodium initialisation failed");
}

std::string to_hex(const unsigned char* data, std::size_t n) {
  std::string out(n * 2 + 1, '\0');
  sodium_bin2hex(out.data(), out.size(), data, n);
  out.resize(n * 2);
  return out;
}

std::optional<std::vector<unsigned char>> from_hex(std::string_view hex) {
  std::vector<unsigned char> out(hex.size() / 2);
  std::size_t len = 0;
  if (hex.size() % 2 != 0 ||
      sodium_hex2bin(out.data(), out.size(), hex.data(), hex.size(), nullptr, &len, nullptr) != 0 ||
      len != out.size())
    return std::nullopt;
  return out;
}

std::string random_hex(std::size_t bytes) {
  std::vector<unsigned char> buf(bytes);
  randombytes_buf(buf.data(), buf.size());
  return to_hex(buf.data(), buf.size());
}

void digest(std::string_view secret, const unsigned char* salt, unsigned char* out) {
  crypto_generichash(out, kDigestBytes, reinterpret_cast<const unsigned char*>(secret.data()), secret.size(),
                     salt, kSaltBytes);
}

/// Prepared statement with RAII finalisation.
class Statement {
 public:
  Statement(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK)
      throw IoError(std::string("auth store: ") + sqlite3_errmsg(db));
  }
  ~Statement() { sqlite3_finalize(stmt_); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;

  Statement& bind(int i, std::string_view text) {
    sqlite3_bind_text(stmt_, i, text.data(), static_cast<int>(text.size()), SQLITE_TRANSIENT);
    return *this;
  }
  Statement& bind(int i, std::int64_t v) {
    sqlite3_bind_int64(stmt_, i, v);
    return *this;
  }
  bool step() {
    int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    throw IoError(std::string("auth store: ") + sqlite3_errmsg(db_));
  }
  std::string text(int col) const {
    auto* p = sqlite3_column_text(stmt_, col);
    return p ? reinterpret_cast<const char*>(p) : "";
  }
  std::int64_t integer(int col) const { return sqlite3_column_int64(stmt_, col); }

 private:
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

}  // namespace

KeyStore::KeyStore(const std::filesystem::path& path) : path_(path) {
  init_sodium();
  if (sqlite3_open_v2(path.c_str(), &db_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                      nullptr) != SQLITE_OK) {
    std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    throw IoError("cannot open auth store '" + path.string() + "': " + msg);
  }
  sqlite3_busy_timeout(db_, 5000);
  char* err = nullptr;
  if (sqlite3_exec(db_,
                   "CREATE TABLE IF NOT EXISTS api_keys ("
                   " key_id TEXT PRIMARY KEY,"
                   " secret_hash TEXT NOT NULL,"
                   " label TEXT NOT NULL,"
                   " revoked INTEGER NOT NULL DEFAULT 0,"
                   " created_at INTEGER NOT NULL)",
                   nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    sqlite3_close(db_);
    throw IoError("cannot initialise auth store '" + path.string() + "': " + msg);
  }
}

KeyStore::~KeyStore() { sqlite3_close(db_); }

IssuedKey KeyStore::add(std::string_view label) {
  IssuedKey key{"k" + random_hex(kKeyIdBytes), random_hex(kSecretBytes)};
  unsigned char salt[kSaltBytes];
  unsigned char hash[kDigestBytes];
  randombytes_buf(salt, sizeof salt);
  digest(key.secret, salt, hash);
  std::string stored = to_hex(salt, sizeof salt) + to_hex(hash, sizeof hash);
  sodium_memzero(hash, sizeof hash);

  auto now = std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch());
  std::lock_guard lock(mutex_);
  Statement st(db_, "INSERT INTO api_keys(key_id, secret_hash, label, revoked, created_at) VALUES(?,?,?,0,?)");
  st.bind(1, key.key_id).bind(2, stored).bind(3, label).bind(4, static_cast<std::int64_t>(now.count()));
  st.step();
  return key;
}

void KeyStore::revoke(std::string_view key_id) {
  std::lock_guard lock(mutex_);
  Statement st(db_, "UPDATE api_keys SET revoked = 1 WHERE key_id = ?");
  st.bind(1, key_id);
  st.step();
  if (sqlite3_changes(db_) == 0) throw Error("unknown key id '" + std::string(key_id) + "'");
}

std::vector<ApiKeyRecord> KeyStore::list() const {
  std::lock_guard lock(mutex_);
  Statement st(db_, "SELECT key_id, secret_hash, label, revoked, created_at FROM api_keys ORDER BY created_at, key_id");
  std::vector<ApiKeyRecord> out;
  while (st.step()) out.push_back({st.text(0), st.text(1), st.text(2), st.integer(3) != 0, Timestamp(st.integer(4))});
  return out;
}

std::optional<ApiKeyRecord> KeyStore::find(std::string_view key_id) const {
  std::lock_guard lock(mutex_);
  Statement st(db_, "SELECT key_id, secret_hash, label, revoked, created_at FROM api_keys WHERE key_id = ?");
  st.bind(1, key_id);
  if (!st.step()) return std::nullopt;
  return ApiKeyRecord{st.text(0), st.text(1), st.text(2), st.integer(3) != 0, Timestamp(st.integer(4))};
}

std::optional<std::string> KeyStore::authenticate(std::string_view token) const {
  auto dot = token.find('.');
  if (dot == std::string_view::npos || dot == 0) return std::nullopt;
  auto key_id = token.substr(0, dot);
  auto secret = token.substr(dot + 1);

  auto record = find(key_id);
  // Unknown ids still pay for one digest so timing does not reveal them.
  std::vector<unsigned char> salt(kSaltBytes, 0), expected(kDigestBytes, 0);
  bool usable = false;
  if (record) {
    auto raw = from_hex(record->secret_hash);
    if (raw && raw->size() == kSaltBytes + kDigestBytes) {
      std::copy(raw->begin(), raw->begin() + kSaltBytes, salt.begin());
      std::copy(raw->begin() + kSaltBytes, raw->end(), expected.begin());
      usable = true;
    }
  }
  unsigned char actual[kDigestBytes];
  digest(secret, salt.data(), actual);
  bool match = sodium_memcmp(actual, expected.data(), kDigestBytes) == 0;
  sodium_memzero(actual, sizeof actual);
  if (!usable || !match || record->revoked) return std::nullopt;
  return record->key_id;
}

bool KeyStore::is_active(std::string_view key_id) const {
  auto r = find(key_id);
  return r && !r->revoked;
}

}  // namespace crowdlens
