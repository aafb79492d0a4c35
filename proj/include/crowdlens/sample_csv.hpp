#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "crowdlens/model.hpp"

namespace crowdlens {

/// Header line of the sample CSV schema.
inline constexpr std::string_view kSampleCsvHeader = "place_id,timestamp,metric_id,value";

/// Parses the sample CSV schema. Every row, the last included, must end in
/// LF; a row without its terminator is reported as truncated. Errors are
/// ParseError with the 1-based line number as offset.
std::vector<Sample> parse_sample_csv(std::string_view text);
std::vector<Sample> read_sample_csv(const std::filesystem::path& path);

std::string format_value(double value);
void write_sample_csv(std::ostream& out, std::span<const Sample> samples);
/// Rows only, no header.
void write_sample_rows(std::ostream& out, std::span<const Sample> samples);

/// Writes `content` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

}  // namespace crowdlens
