#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "regseg/executor.hpp"

namespace regseg {

// Layout:
//   "RSEGTC01"                  8-byte magic
//   u64 little endian           header length in bytes
//   header                      UTF-8 text, one record per line
//   zero padding                to a 64-byte file offset
//   payload                     f32 little endian tensor data
//
// Header records, in this order:
//   format_version 1
//   meta <key> <value>                            sorted by key
//   tensor <name> f32 <n> <c> <h> <w> <offset> <nbytes>  sorted by name
//   checksum <crc32 of the preceding header text and the payload, 8 hex>
//
// Offsets are relative to the payload start. Each tensor starts at the
// first 64-byte boundary after the previous one, so a given tensor set has
// exactly one valid encoding.

inline constexpr std::string_view kContainerMagic = "RSEGTC01";
inline constexpr int kContainerVersion = 1;
inline constexpr std::size_t kContainerAlignment = 64;

using Metadata = std::map<std::string, std::string>;

struct Container {
  Metadata metadata;
  WeightMap tensors;

  friend bool operator==(const Container&, const Container&) = default;
};

// Throws ValueError for empty names or names/keys containing whitespace and
// metadata values containing line breaks.
std::string serialize_container(const WeightMap& tensors, const Metadata& metadata = {});

// Validates everything before materialising: FormatError for a bad magic,
// unparsable header or unknown version; CorruptionError for a bad header
// length, checksum mismatch, truncation or offsets that break the packing.
Container parse_container(std::string_view bytes);

void write_container(const std::filesystem::path& path, const WeightMap& tensors,
                     const Metadata& metadata = {});
Container read_container(const std::filesystem::path& path);

std::uint32_t crc32(std::string_view bytes, std::uint32_t seed = 0);

}  // namespace regseg
