#include "crowdlens/time.hpp"

#include <cstdio>

#include "crowdlens/error.hpp"

namespace crowdlens {
namespace {

bool read_digits(std::string_view text, std::size_t pos, std::size_t count, unsigned& out) {
  if (pos + count > text.size()) return false;
  unsigned v = 0;
  for (std::size_t i = pos; i < pos + count; ++i) {
    char c = text[i];
    if (c < '0' || c > '9') return false;
    v = v * 10 + static_cast<unsigned>(c - '0');
  }
  out = v;
  return true;
}

bool expect(std::string_view text, std::size_t pos, char c) {
  return pos < text.size() && text[pos] == c;
}

}  // namespace

Timestamp Timestamp::from_civil(int year, unsigned month, unsigned day, unsigned hour,
                                unsigned minute, unsigned second) {
  using namespace std::chrono;
  year_month_day ymd{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}};
  if (!ymd.ok()) throw ParseError("invalid calendar date", 0);
  auto days = sys_days{ymd}.time_since_epoch().count();
  return Timestamp(static_cast<std::int64_t>(days) * 86400 + hour * 3600 + minute * 60 + second);
}

Timestamp Timestamp::parse(std::string_view text) {
  auto fail = [&](std::size_t at) -> Timestamp {
    throw ParseError("invalid ISO-8601 UTC timestamp '" + std::string(text) + "'", at);
  };
  unsigned y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  if (!read_digits(text, 0, 4, y)) return fail(0);
  if (!expect(text, 4, '-') || !read_digits(text, 5, 2, mo)) return fail(4);
  if (!expect(text, 7, '-') || !read_digits(text, 8, 2, d)) return fail(7);
  if (!(expect(text, 10, 'T') || expect(text, 10, ' ')) || !read_digits(text, 11, 2, h)) return fail(10);
  if (!expect(text, 13, ':') || !read_digits(text, 14, 2, mi)) return fail(13);
  if (!expect(text, 16, ':') || !read_digits(text, 17, 2, s)) return fail(16);
  std::string_view rest = text.substr(19);
  if (!(rest.empty() || rest == "Z" || rest == "+00:00")) return fail(19);
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || s > 59) return fail(0);
  using namespace std::chrono;
  year_month_day ymd{std::chrono::year{static_cast<int>(y)}, std::chrono::month{mo},
                     std::chrono::day{d}};
  if (!ymd.ok()) return fail(0);
  return from_civil(static_cast<int>(y), mo, d, h, mi, s);
}

std::string Timestamp::iso() const {
  using namespace std::chrono;
  std::int64_t days = seconds_ / 86400;
  std::int64_t rem = seconds_ % 86400;
  if (rem < 0) {
    rem += 86400;
    days -= 1;
  }
  year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(rem / 3600), static_cast<int>(rem / 60 % 60),
                static_cast<int>(rem % 60));
  return buf;
}

}  // namespace crowdlens
