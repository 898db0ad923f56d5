#pragma once

#include <filesystem>

#include "regseg/architecture.hpp"
#include "regseg/container.hpp"
#include "regseg/executor.hpp"
#include "regseg/image_io.hpp"

namespace regseg {

// Metadata keys stored next to the weights.
namespace meta_key {
inline constexpr const char* kPreset = "preset";
inline constexpr const char* kSchedule = "schedule";
inline constexpr const char* kNumClasses = "num_classes";
inline constexpr const char* kSeChannels = "se_channels";  // comma list per block
inline constexpr const char* kMean = "norm_mean";
inline constexpr const char* kStd = "norm_std";
}  // namespace meta_key

Metadata model_metadata(const ArchitecturePreset& preset, const Normalization& norm = {});

// Starts from `base` (or the named preset when the metadata names a known
// one) and applies the schedule, class count and SE widths found in
// `metadata`. ConfigError on malformed values.
ArchitecturePreset preset_from_metadata(const Metadata& metadata,
                                        const ArchitecturePreset& base);
Normalization normalization_from_metadata(const Metadata& metadata);

struct LoadedModel {
  ArchitecturePreset preset;
  Normalization norm;
  Container container;
};

LoadedModel load_model(const std::filesystem::path& path, const ArchitecturePreset& base);

void save_model(const std::filesystem::path& path, const ArchitecturePreset& preset,
                const WeightMap& weights, const Normalization& norm = {});

}  // namespace regseg
