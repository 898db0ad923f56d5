#include "regseg/model.hpp"

#include <algorithm>
#include <array>
#include <charconv>

#include "regseg/errors.hpp"

namespace regseg {

namespace {

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const std::string item = text.substr(pos, comma - pos);
    T v{};
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
      throw ConfigError("metadata " + key + ": bad list entry '" + item + "'");
    }
    out.push_back(v);
    pos = comma + 1;
  }
  return out;
}

template <typename T>
std::string join(const T& values) {
  std::string out;
  char buf[32];
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto res = std::to_chars(buf, buf + sizeof buf, values[i]);
    if (i) out += ',';
    out.append(buf, res.ptr);
  }
  return out;
}

std::array<float, 3> triple(const Metadata& m, const char* key, std::array<float, 3> fallback) {
  const auto it = m.find(key);
  if (it == m.end()) return fallback;
  const auto v = parse_list<float>(key, it->second);
  if (v.size() != 3) throw ConfigError(std::string("metadata ") + key + " needs 3 values");
  return {v[0], v[1], v[2]};
}

}  // namespace

Metadata model_metadata(const ArchitecturePreset& preset, const Normalization& norm) {
  Metadata m;
  m[meta_key::kPreset] = preset.name;
  m[meta_key::kSchedule] = preset.schedule;
  m[meta_key::kNumClasses] = std::to_string(preset.num_classes);
  std::vector<int> se;
  for (const BlockSpec& b : expand_blocks(preset)) se.push_back(b.resolved_se_channels());
  m[meta_key::kSeChannels] = join(se);
  m[meta_key::kMean] = join(norm.mean);
  m[meta_key::kStd] = join(norm.std);
  return m;
}

ArchitecturePreset preset_from_metadata(const Metadata& metadata,
                                        const ArchitecturePreset& base) {
  ArchitecturePreset p = base;
  if (const auto it = metadata.find(meta_key::kPreset);
      it != metadata.end() && it->second != base.name) {
    const auto names = preset_names();
    if (std::find(names.begin(), names.end(), it->second) != names.end()) {
      p = preset_by_name(it->second);
    }
  }
  if (const auto it = metadata.find(meta_key::kSchedule); it != metadata.end()) {
    p.schedule = it->second;
  }
  if (const auto it = metadata.find(meta_key::kNumClasses); it != metadata.end()) {
    const auto v = parse_list<int>(meta_key::kNumClasses, it->second);
    if (v.size() != 1) throw ConfigError("metadata num_classes must be one integer");
    p.num_classes = v[0];
  }
  if (const auto it = metadata.find(meta_key::kSeChannels); it != metadata.end()) {
    p.se_channels = parse_list<int>(meta_key::kSeChannels, it->second);
  }
  p.validate();
  return p;
}

Normalization normalization_from_metadata(const Metadata& metadata) {
  const Normalization d;
  Normalization n;
  n.mean = triple(metadata, meta_key::kMean, d.mean);
  n.std = triple(metadata, meta_key::kStd, d.std);
  for (float s : n.std) {
    if (!(s > 0.0f)) throw ConfigError("normalization std must be positive");
  }
  return n;
}

LoadedModel load_model(const std::filesystem::path& path, const ArchitecturePreset& base) {
  LoadedModel m;
  m.container = read_container(path);
  m.preset = preset_from_metadata(m.container.metadata, base);
  m.norm = normalization_from_metadata(m.container.metadata);
  return m;
}

void save_model(const std::filesystem::path& path, const ArchitecturePreset& preset,
                const WeightMap& weights, const Normalization& norm) {
  write_container(path, weights, model_metadata(preset, norm));
}

}  // namespace regseg
