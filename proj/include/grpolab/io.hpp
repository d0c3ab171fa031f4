#pragma once

#include <cstdint>
#include <string>

namespace grpolab {

std::string read_file(const std::string& path);
// Creates parent directories as needed.
void write_file(const std::string& path, const std::string& contents);
bool file_exists(const std::string& path);

std::string hex64(std::uint64_t x);
std::uint64_t parse_hex64(const std::string& s);

// Fixed-precision decimal for CSV output.
std::string fixed(double x, int digits = 6);

}  // namespace grpolab
