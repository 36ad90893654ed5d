#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace mblr {

inline constexpr std::string_view kVersion = "0.1.0";

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

/// Runs one command line (args exclude the program name). Returns the exit
/// code: 0 ok, 1 usage, 2 data, 3 numerical. Errors are written to `err` as
/// a single "ERROR[<class>]: message" line.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mblr
