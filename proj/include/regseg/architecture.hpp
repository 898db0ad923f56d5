#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "regseg/graph.hpp"
#include "regseg/schedule.hpp"

namespace regseg {

// One residual block. With dilations (1,1) a D block is a Y block
// (SE-ResNeXt), apart from the 2x2 average pool on a stride-2 shortcut.
struct BlockSpec {
  int in_channels = 0;
  int out_channels = 0;
  int stride = 1;
  DilationTuple dilations{1};
  int group_width = 16;
  int se_channels = 0;  // 0 selects default_se_channels(in_channels)

  int groups() const { return out_channels / group_width; }
  int resolved_se_channels() const;
  void validate() const;  // throws SpecError
};

// SE bottleneck width for a block with the given input width: in / 4, at
// least 8.
int default_se_channels(int in_channels);

// main:     1x1 conv+BN+ReLU -> 3x3 multi-dilation group conv+BN+ReLU -> SE
//           -> 1x1 conv+BN
// shortcut: identity; or (stride 2) avgpool2x2 -> 1x1 conv+BN; or
//           (channel change) 1x1 conv+BN
// output:   ReLU(main + shortcut)
// Slot names live under `prefix` (e.g. "stage16.block3").
int add_d_block(GraphBuilder& b, int x, const BlockSpec& spec,
                const std::string& prefix);

// Reference Y block: the 3x3 stage is one group conv at dilations[0]
// (normally 1), and a stride-2 shortcut is a strided 1x1 conv+BN.
int add_y_block(GraphBuilder& b, int x, const BlockSpec& spec,
                const std::string& prefix);

// Stand-alone single-block graphs with output "block".
ModelGraph build_d_block(const BlockSpec& spec);
ModelGraph build_y_block(const BlockSpec& spec);

struct StageSpec {
  int channels = 0;
  int repeat = 0;
  friend bool operator==(const StageSpec&, const StageSpec&) = default;
};

// Architecture description. The default reproduces the RegSeg backbone:
// 3x3 stem (stride 2, 32 ch); 48 ch x1 at 1/4; 128 ch x3 at 1/8;
// 256 ch x13 at 1/16; one 320 ch block at 1/16. The first block of each of
// stage4/8/16 has stride 2. The schedule binds to the stride-1 blocks at
// 1/16 in order (stage16 blocks 1.., then the final blocks).
struct ArchitecturePreset {
  std::string name = "regseg";
  int input_channels = 3;
  int stem_channels = 32;
  int group_width = 16;
  StageSpec stage4{48, 1};
  StageSpec stage8{128, 3};
  StageSpec stage16{256, 13};
  StageSpec final_stage{320, 1};
  std::string schedule = kDefaultSchedule;
  int num_classes = 19;
  std::vector<int> se_channels;  // per block override, empty = default rule

  std::size_t schedule_length() const;
  int block_count() const;
  void validate() const;  // throws ConfigError

  friend bool operator==(const ArchitecturePreset&, const ArchitecturePreset&) = default;
};

ArchitecturePreset default_preset();
// "regseg" (Cityscapes, 19 classes) or "regseg-camvid" (11 classes).
ArchitecturePreset preset_by_name(std::string_view name);
std::vector<std::string> preset_names();

// key = value text, '#' comments. Unknown keys are a ConfigError.
ArchitecturePreset parse_preset(std::string_view text);
ArchitecturePreset load_preset_file(const std::filesystem::path& path);
std::string format_preset(const ArchitecturePreset& preset);

// The block list a preset expands to, schedule applied.
std::vector<BlockSpec> expand_blocks(const ArchitecturePreset& preset);
// Slot prefix of block i in expand_blocks order, e.g. "stage8.block2".
std::vector<std::string> block_prefixes(const ArchitecturePreset& preset);

struct BackboneTaps {
  int feat4 = -1;
  int feat8 = -1;
  int feat16 = -1;
  int last = -1;
};

// Stem plus the first `max_blocks` D blocks (all when negative).
BackboneTaps add_backbone(GraphBuilder& b, int x, const ArchitecturePreset& preset,
                          int max_blocks = -1);

// Backbone-only graphs. Outputs: feat4, feat8, feat16 (when reached) and
// "backbone" (the last block).
ModelGraph build_backbone(const DilationSchedule& schedule, int group_width = 16);
ModelGraph build_backbone(const ArchitecturePreset& preset, int max_blocks = -1);

// 1x1,128 on 1/16; 1x1,128 on 1/8; 1x1,8 on 1/4; upsample 1/16 to 1/8, sum,
// 3x3,64; upsample to 1/4, concat with the 1/4 head (72 ch), 3x3,64; 1x1
// classifier with bias; bilinear resize to the resolution of `image`.
// Every conv but the classifier is followed by BN+ReLU.
int add_decoder(GraphBuilder& b, int feat4, int feat8, int feat16, int image,
                int num_classes);

// Backbone + decoder. Outputs as build_backbone plus "logits".
ModelGraph build_regseg(const DilationSchedule& schedule, int num_classes);
ModelGraph build_regseg(const ArchitecturePreset& preset);

}  // namespace regseg
