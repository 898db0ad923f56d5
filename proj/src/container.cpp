#include "regseg/container.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <vector>

#include "regseg/errors.hpp"

namespace regseg {

static_assert(std::endian::native == std::endian::little,
              "container payload is little endian");

namespace {

constexpr std::size_t kPreamble = 16;
constexpr std::string_view kChecksumKey = "checksum ";

std::size_t align_up(std::size_t v) {
  return (v + kContainerAlignment - 1) / kContainerAlignment * kContainerAlignment;
}

bool has_space(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
  });
}

std::uint64_t read_u64le(const char* p) {
  std::uint64_t v = 0;
  std::memcpy(&v, p, sizeof v);
  return v;
}

std::vector<std::string_view> split(std::string_view line, std::size_t max_parts) {
  std::vector<std::string_view> parts;
  while (!line.empty() && parts.size() + 1 < max_parts) {
    const std::size_t sp = line.find(' ');
    if (sp == std::string_view::npos) break;
    parts.push_back(line.substr(0, sp));
    line.remove_prefix(sp + 1);
  }
  parts.push_back(line);
  return parts;
}

template <typename T>
T parse_number(std::string_view s, int base = 10) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw FormatError("container header: bad number '" + std::string(s) + "'");
  }
  return v;
}

struct IndexEntry {
  std::string name;
  Shape shape;
  std::uint64_t offset = 0;
  std::uint64_t nbytes = 0;
};

}  // namespace

std::uint32_t crc32(std::string_view bytes, std::uint32_t seed) {
  uLong crc = seed;
  while (!bytes.empty()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size(), 1u << 30));
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), chunk);
    bytes.remove_prefix(chunk);
  }
  return static_cast<std::uint32_t>(crc);
}

std::string serialize_container(const WeightMap& tensors, const Metadata& metadata) {
  std::ostringstream h;
  h << "format_version " << kContainerVersion << "\n";
  for (const auto& [key, value] : metadata) {
    if (key.empty() || has_space(key)) {
      throw ValueError("metadata key '" + key + "' is empty or contains whitespace");
    }
    if (value.find_first_of("\r\n") != std::string::npos) {
      throw ValueError("metadata value of '" + key + "' contains a line break");
    }
    h << "meta " << key << " " << value << "\n";
  }
  std::size_t offset = 0;
  for (const auto& [name, t] : tensors) {
    if (name.empty() || has_space(name)) {
      throw ValueError("tensor name '" + name + "' is empty or contains whitespace");
    }
    const Shape s = t.shape();
    const std::size_t nbytes = t.size() * sizeof(float);
    h << "tensor " << name << " f32 " << s.n << " " << s.c << " " << s.h << " " << s.w
      << " " << offset << " " << nbytes << "\n";
    offset = align_up(offset + nbytes);
  }

  std::string payload;
  std::size_t end = 0;
  for (const auto& [name, t] : tensors) {
    const std::size_t nbytes = t.size() * sizeof(float);
    payload.resize(end + nbytes, '\0');
    std::memcpy(payload.data() + end, t.data().data(), nbytes);
    end = align_up(end + nbytes);
  }
  payload.resize(end, '\0');

  std::string header = h.str();
  std::uint32_t crc = crc32(header);
  crc = crc32(payload, crc);
  char hex[9];
  std::snprintf(hex, sizeof hex, "%08x", crc);
  header += std::string(kChecksumKey) + hex + "\n";

  std::string out(kContainerMagic);
  const std::uint64_t len = header.size();
  out.append(reinterpret_cast<const char*>(&len), sizeof len);
  out += header;
  out.resize(align_up(out.size()), '\0');
  out += payload;
  return out;
}

Container parse_container(std::string_view bytes) {
  if (bytes.size() < kContainerMagic.size() ||
      bytes.substr(0, kContainerMagic.size()) != kContainerMagic) {
    throw FormatError("not a weight container (bad magic)");
  }
  if (bytes.size() < kPreamble) throw CorruptionError("container truncated in preamble");
  const std::uint64_t header_len = read_u64le(bytes.data() + 8);
  if (header_len > bytes.size() - kPreamble) {
    throw CorruptionError("header length " + std::to_string(header_len) +
                          " exceeds file size " + std::to_string(bytes.size()));
  }
  const std::string_view header = bytes.substr(kPreamble, header_len);
  const std::size_t payload_start = align_up(kPreamble + header_len);
  if (payload_start > bytes.size()) throw CorruptionError("container truncated in padding");
  const std::string_view padding =
      bytes.substr(kPreamble + header_len, payload_start - kPreamble - header_len);
  if (padding.find_first_not_of('\0') != std::string_view::npos) {
    throw CorruptionError("nonzero header padding");
  }
  const std::string_view payload = bytes.substr(payload_start);

  // checksum line is the last line of the header
  if (header.empty() || header.back() != '\n') {
    throw CorruptionError("header does not end with a line break");
  }
  const std::size_t last = header.rfind('\n', header.size() - 2);
  const std::size_t cs_start = last == std::string_view::npos ? 0 : last + 1;
  const std::string_view cs_line = header.substr(cs_start, header.size() - 1 - cs_start);
  if (cs_line.substr(0, kChecksumKey.size()) != kChecksumKey ||
      cs_line.size() != kChecksumKey.size() + 8) {
    throw CorruptionError("header checksum record missing");
  }
  for (char ch : cs_line.substr(kChecksumKey.size())) {
    if (!((ch >= '0' && ch <= '9') || (ch >= 'a' && ch <= 'f'))) {
      throw CorruptionError("checksum is not 8 lowercase hex digits");
    }
  }
  const std::uint32_t stored =
      parse_number<std::uint32_t>(cs_line.substr(kChecksumKey.size()), 16);
  const std::string_view body = header.substr(0, cs_start);
  if (crc32(payload, crc32(body)) != stored) {
    throw CorruptionError("container checksum mismatch");
  }

  Container c;
  std::vector<IndexEntry> index;
  bool have_version = false;
  std::size_t pos = 0;
  while (pos < body.size()) {
    const std::size_t nl = body.find('\n', pos);
    const std::string_view line = body.substr(pos, nl - pos);
    pos = nl + 1;
    const auto kw = split(line, 2);
    if (kw[0] == "format_version" && kw.size() == 2) {
      if (have_version || !c.metadata.empty() || !index.empty()) {
        throw FormatError("format_version must be the first record");
      }
      const int version = parse_number<int>(kw[1]);
      if (version != kContainerVersion) {
        throw FormatError("unsupported container version " + std::to_string(version));
      }
      have_version = true;
    } else if (kw[0] == "meta" && kw.size() == 2) {
      const auto kv = split(kw[1], 2);
      if (kv.size() != 2 || kv[0].empty()) throw FormatError("bad meta record");
      std::string key(kv[0]);
      if (!index.empty() || (!c.metadata.empty() && c.metadata.rbegin()->first >= key)) {
        throw FormatError("meta records out of canonical order");
      }
      c.metadata.emplace(std::move(key), std::string(kv[1]));
    } else if (kw[0] == "tensor" && kw.size() == 2) {
      const auto f = split(kw[1], 9);
      if (f.size() != 8) throw FormatError("bad tensor record");
      if (f[1] != "f32") throw FormatError("unsupported dtype " + std::string(f[1]));
      IndexEntry e;
      e.name = std::string(f[0]);
      if (e.name.empty()) throw FormatError("empty tensor name");
      if (!index.empty() && index.back().name >= e.name) {
        throw FormatError("tensor records out of canonical order");
      }
      e.shape = Shape{parse_number<int>(f[2]), parse_number<int>(f[3]),
                      parse_number<int>(f[4]), parse_number<int>(f[5])};
      e.offset = parse_number<std::uint64_t>(f[6]);
      e.nbytes = parse_number<std::uint64_t>(f[7]);
      if (!e.shape.valid()) throw FormatError("bad shape for " + e.name);
      index.push_back(std::move(e));
    } else {
      throw FormatError("unknown header record '" + std::string(line.substr(0, 32)) + "'");
    }
  }
  if (!have_version) throw FormatError("missing format_version");

  std::uint64_t expected = 0;
  for (const IndexEntry& e : index) {
    std::uint64_t elems = 1;
    for (int d : {e.shape.n, e.shape.c, e.shape.h, e.shape.w}) {
      if (__builtin_mul_overflow(elems, static_cast<std::uint64_t>(d), &elems)) {
        throw CorruptionError(e.name + ": shape overflows");
      }
    }
    if (elems > payload.size() / sizeof(float) || e.nbytes != elems * sizeof(float)) {
      throw CorruptionError(e.name + ": byte length does not match shape");
    }
    if (e.offset != expected) {
      throw CorruptionError(e.name + ": offset " + std::to_string(e.offset) +
                            " (expected " + std::to_string(expected) + ")");
    }
    if (e.offset + e.nbytes > payload.size()) {
      throw CorruptionError(e.name + ": extends past the payload");
    }
    expected = align_up(e.offset + e.nbytes);
  }
  if (expected != payload.size()) {
    throw CorruptionError("payload is " + std::to_string(payload.size()) +
                          " bytes, index describes " + std::to_string(expected));
  }

  for (const IndexEntry& e : index) {
    Tensor t(e.shape, 0.0f);
    std::memcpy(t.data().data(), payload.data() + e.offset, e.nbytes);
    c.tensors.emplace(e.name, std::move(t));
  }
  return c;
}

void write_container(const std::filesystem::path& path, const WeightMap& tensors,
                     const Metadata& metadata) {
  const std::string bytes = serialize_container(tensors, metadata);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write to " + path.string() + " failed");
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
  if (f.bad()) throw IoError("read from " + path.string() + " failed");
  return parse_container(bytes);
}

}  // namespace regseg
