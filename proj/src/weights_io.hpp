#pragma once

// Shared container for weight files:
//
//   <MAGIC> v1 <header fields...>\n
//   blocks <count>\n
//   <name> <rank> <dim>... <byte offset>\n     (one line per block)
//   end\n
//   <raw little-endian float32 blocks, in manifest order>
//
// Offsets count from the first byte after the "end" line.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dshift::detail {

struct WeightBlock {
  std::string name;
  std::vector<std::size_t> dims;
  std::vector<float> values;
};

struct WeightFile {
  std::string magic;
  std::vector<std::string> header;  // fields after "<MAGIC> v1"
  std::vector<WeightBlock> blocks;
};

void write_weight_file(const std::filesystem::path& path, const WeightFile& file);

// Parses and validates the container. Throws ArchitectureError on a wrong
// magic or version and FileError on truncation or malformed manifests.
WeightFile read_weight_file(const std::filesystem::path& path, const std::string& magic);

// Checks a block's name and dims against the expected ones.
void expect_block(const WeightBlock& block, const std::string& name,
                  const std::vector<std::size_t>& dims);

}  // namespace dshift::detail
