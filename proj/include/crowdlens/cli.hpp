#pragma once

#include <iosfwd>

namespace crowdlens {

inline constexpr const char* kConfigEnvVar = "CROWDLENS_CONFIG";

/// Exit codes: 0 success, 1 failure, 2 usage error.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace crowdlens
