#include "weights_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "dshift/error.hpp"

namespace fs = std::filesystem;

namespace dshift::detail {

namespace {

constexpr const char* kVersion = "v1";

std::string dims_text(const std::vector<std::size_t>& dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(dims[i]);
  }
  return s;
}

void put_le32(std::vector<char>& out, float value) {
  const auto bits = std::bit_cast<std::uint32_t>(value);
  for (int shift = 0; shift < 32; shift += 8) {
    out.push_back(static_cast<char>((bits >> shift) & 0xffu));
  }
}

float get_le32(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                             (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

// Reads one '\n'-terminated line starting at pos.
bool next_line(const std::string& bytes, std::size_t& pos, std::string& line) {
  const std::size_t end = bytes.find('\n', pos);
  if (end == std::string::npos) return false;
  line = bytes.substr(pos, end - pos);
  pos = end + 1;
  return true;
}

}  // namespace

void write_weight_file(const fs::path& path, const WeightFile& file) {
  std::ostringstream head;
  head << file.magic << ' ' << kVersion;
  for (const auto& field : file.header) head << ' ' << field;
  head << '\n' << "blocks " << file.blocks.size() << '\n';
  std::size_t offset = 0;
  for (const auto& block : file.blocks) {
    head << block.name << ' ' << block.dims.size();
    for (std::size_t d : block.dims) head << ' ' << d;
    head << ' ' << offset << '\n';
    offset += block.values.size() * 4;
  }
  head << "end\n";

  std::vector<char> payload;
  payload.reserve(offset);
  for (const auto& block : file.blocks) {
    for (float v : block.values) put_le32(payload, v);
  }

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileError(path.string(), "cannot open for writing");
  const std::string text = head.str();
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw FileError(path.string(), "write failed");
}

WeightFile read_weight_file(const fs::path& path, const std::string& magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError(path.string(), "cannot open for reading");
  const std::string bytes(std::istreambuf_iterator<char>(in), {});

  std::size_t pos = 0;
  std::string line;
  if (!next_line(bytes, pos, line)) throw FileError(path.string(), "missing header line");
  std::istringstream header(line);
  WeightFile file;
  std::string version;
  header >> file.magic >> version;
  if (file.magic != magic) {
    throw ArchitectureError(path.string() + ": expected a " + magic + " file, found '" +
                            file.magic + "'");
  }
  if (version != kVersion) {
    throw ArchitectureError(path.string() + ": unsupported format version '" + version + "'");
  }
  for (std::string field; header >> field;) file.header.push_back(field);

  if (!next_line(bytes, pos, line)) throw FileError(path.string(), "truncated manifest");
  std::istringstream count_line(line);
  std::string keyword;
  std::size_t count = 0;
  if (!(count_line >> keyword >> count) || keyword != "blocks" || count > 4096) {
    throw FileError(path.string(), "malformed block count");
  }

  std::vector<std::size_t> offsets;
  for (std::size_t i = 0; i < count; ++i) {
    if (!next_line(bytes, pos, line)) throw FileError(path.string(), "truncated manifest");
    std::istringstream fields(line);
    WeightBlock block;
    std::size_t rank = 0;
    if (!(fields >> block.name >> rank) || rank > 8) {
      throw FileError(path.string(), "malformed manifest line '" + line + "'");
    }
    block.dims.resize(rank);
    std::size_t numel = 1;
    for (auto& d : block.dims) {
      if (!(fields >> d) || d > (1u << 24)) {
        throw FileError(path.string(), "malformed manifest line '" + line + "'");
      }
      numel *= d;
    }
    std::size_t offset = 0;
    if (!(fields >> offset)) throw FileError(path.string(), "malformed manifest line '" + line + "'");
    block.values.resize(numel);
    offsets.push_back(offset);
    file.blocks.push_back(std::move(block));
  }
  if (!next_line(bytes, pos, line) || line != "end") {
    throw FileError(path.string(), "manifest not terminated by 'end'");
  }

  const std::size_t data_start = pos;
  for (std::size_t i = 0; i < file.blocks.size(); ++i) {
    auto& block = file.blocks[i];
    const std::size_t begin = data_start + offsets[i];
    if (begin + block.values.size() * 4 > bytes.size()) {
      throw FileError(path.string(), "truncated data for block '" + block.name + "'");
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + begin;
    for (std::size_t j = 0; j < block.values.size(); ++j) block.values[j] = get_le32(p + 4 * j);
  }
  return file;
}

void expect_block(const WeightBlock& block, const std::string& name,
                  const std::vector<std::size_t>& dims) {
  if (block.name != name) {
    throw ArchitectureError("expected block '" + name + "', found '" + block.name + "'");
  }
  if (block.dims != dims) {
    throw ArchitectureError("block '" + name + "' has shape " + dims_text(block.dims) +
                            ", expected " + dims_text(dims));
  }
}

}  // namespace dshift::detail
