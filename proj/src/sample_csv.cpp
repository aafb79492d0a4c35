#include "crowdlens/sample_csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <system_error>
#include <unistd.h>

namespace crowdlens {
namespace {

std::vector<std::string> split_row(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw ParseError("line " + std::to_string(line_no) + ": unterminated quote", line_no);
  fields.push_back(std::move(cur));
  return fields;
}

void write_field(std::ostream& out, std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) {
    out << field;
    return;
  }
  out << '"';
  for (char c : field) {
    if (c == '"') out << '"';
    out << c;
  }
  out << '"';
}

}  // namespace

std::vector<Sample> parse_sample_csv(std::string_view text) {
  std::vector<Sample> samples;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    ++line_no;
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos)
      throw ParseError("line " + std::to_string(line_no) + ": truncated row (no line terminator)",
                       line_no);
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (line_no == 1) {
      if (line != kSampleCsvHeader)
        throw ParseError("line 1: expected header '" + std::string(kSampleCsvHeader) + "'", 1);
      continue;
    }
    auto fail = [line_no](const std::string& msg) {
      throw ParseError("line " + std::to_string(line_no) + ": " + msg, line_no);
    };
    auto fields = split_row(line, line_no);
    if (fields.size() != 4) fail("expected 4 fields, got " + std::to_string(fields.size()));
    if (fields[0].empty()) fail("empty place_id");
    if (fields[2].empty()) fail("empty metric_id");
    Sample s;
    s.place_id = std::move(fields[0]);
    try {
      s.t = Timestamp::parse(fields[1]);
    } catch (const ParseError&) {
      fail("bad timestamp '" + fields[1] + "'");
    }
    s.metric_id = std::move(fields[2]);
    const auto& v = fields[3];
    auto res = std::from_chars(v.data(), v.data() + v.size(), s.value);
    if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size() ||
        !std::isfinite(s.value))
      fail("bad value '" + v + "'");
    samples.push_back(std::move(s));
  }
  if (line_no == 0) throw ParseError("line 1: missing header", 1);
  return samples;
}

std::vector<Sample> read_sample_csv(const std::filesystem::path& path) {
  return parse_sample_csv(read_file(path));
}

std::string format_value(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

void write_sample_csv(std::ostream& out, std::span<const Sample> samples) {
  out << kSampleCsvHeader << '\n';
  write_sample_rows(out, samples);
}

void write_sample_rows(std::ostream& out, std::span<const Sample> samples) {
  for (const auto& s : samples) {
    write_field(out, s.place_id);
    out << ',' << s.t.iso() << ',';
    write_field(out, s.metric_id);
    out << ',' << format_value(s.value) << '\n';
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failure on '" + path.string() + "'");
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write failure on '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot replace '" + path.string() + "'");
  }
}

}  // namespace crowdlens
