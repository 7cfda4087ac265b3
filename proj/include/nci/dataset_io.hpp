#pragma once

// Binary dataset container.
//
//   "NCIDATA1" | u32 LE header length | UTF-8 JSON header | float32 LE payload
//
// The header holds {version, n, m, d, labels[], graphs[], funcs[]}. The
// payload is sample-major; within a sample the X block precedes the Y block
// and both are row-major. Values are stored in 32 bits and widened on read.

#include <nci/synth.hpp>

#include <filesystem>
#include <iosfwd>
#include <vector>

namespace nci {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_dataset(std::ostream& out, const std::vector<Sample>& samples);
void write_dataset(const std::filesystem::path& path, const std::vector<Sample>& samples);

/// Throws IoError on a bad magic, truncated payload or malformed header.
std::vector<Sample> read_dataset(std::istream& in);
std::vector<Sample> read_dataset(const std::filesystem::path& path);

}  // namespace nci
