#include "regseg/architecture.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "regseg/errors.hpp"

namespace regseg {

int default_se_channels(int in_channels) {
  return std::max(8, in_channels / 4);
}

int BlockSpec::resolved_se_channels() const {
  return se_channels > 0 ? se_channels : default_se_channels(in_channels);
}

void BlockSpec::validate() const {
  if (in_channels < 1 || out_channels < 1) {
    throw SpecError("block channels must be >= 1");
  }
  if (stride != 1 && stride != 2) {
    throw SpecError("block stride must be 1 or 2, got " + std::to_string(stride));
  }
  if (group_width < 1 || out_channels % group_width != 0) {
    throw SpecError("group width " + std::to_string(group_width) +
                    " must divide out_channels " + std::to_string(out_channels));
  }
  if (dilations.empty()) throw SpecError("block needs at least one dilation");
  for (int d : dilations) {
    if (d < 1) throw SpecError("dilation rates must be >= 1");
  }
  if (groups() % static_cast<int>(dilations.size()) != 0) {
    throw SpecError(std::to_string(groups()) + " groups cannot be split into " +
                    std::to_string(dilations.size()) + " dilation branches");
  }
}

namespace {

int conv_bn(GraphBuilder& b, int x, const std::string& name, const ConvSpec& spec) {
  const int c = b.conv(x, name, spec);
  return b.batchnorm(c, name + ".bn");
}

ConvSpec pointwise(int in, int out) {
  ConvSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel = 1;
  return s;
}

int add_block(GraphBuilder& b, int x, const BlockSpec& spec,
              const std::string& prefix, bool dilated_block) {
  spec.validate();
  if (b.channels(x) != spec.in_channels) {
    throw SpecError(prefix + ": input has " + std::to_string(b.channels(x)) +
                    " channels, block expects " + std::to_string(spec.in_channels));
  }
  const int w = spec.out_channels;

  int main = conv_bn(b, x, prefix + ".conv1", pointwise(spec.in_channels, w));
  main = b.relu(main, prefix + ".conv1.relu");

  ConvSpec grouped;
  grouped.in_channels = w;
  grouped.out_channels = w;
  grouped.kernel = 3;
  grouped.stride = spec.stride;
  grouped.groups = spec.groups();
  if (dilated_block) {
    main = b.multi_dilation_conv(main, prefix + ".conv2", grouped, spec.dilations);
  } else {
    grouped.dilation = spec.dilations.front();
    main = b.conv(main, prefix + ".conv2", grouped);
  }
  main = b.batchnorm(main, prefix + ".conv2.bn");
  main = b.relu(main, prefix + ".conv2.relu");
  main = b.squeeze_excite(main, prefix + ".se", spec.resolved_se_channels());
  main = conv_bn(b, main, prefix + ".conv3", pointwise(w, w));

  int shortcut = x;
  if (spec.stride == 2 && dilated_block) {
    shortcut = b.avgpool2x2(x, prefix + ".shortcut.pool");
    shortcut = conv_bn(b, shortcut, prefix + ".shortcut.conv",
                       pointwise(spec.in_channels, w));
  } else if (spec.stride == 2) {
    ConvSpec strided = pointwise(spec.in_channels, w);
    strided.stride = 2;
    shortcut = conv_bn(b, shortcut, prefix + ".shortcut.conv", strided);
  } else if (spec.in_channels != w) {
    shortcut = conv_bn(b, shortcut, prefix + ".shortcut.conv",
                       pointwise(spec.in_channels, w));
  }
  const int sum = b.add(main, shortcut, prefix + ".add");
  return b.relu(sum, prefix + ".relu");
}

ModelGraph single_block_graph(const BlockSpec& spec, bool dilated) {
  GraphBuilder b(spec.in_channels);
  const int out = add_block(b, b.input(), spec, "block", dilated);
  b.mark_output("block", out);
  return std::move(b).build();
}

}  // namespace

int add_d_block(GraphBuilder& b, int x, const BlockSpec& spec,
                const std::string& prefix) {
  return add_block(b, x, spec, prefix, true);
}

int add_y_block(GraphBuilder& b, int x, const BlockSpec& spec,
                const std::string& prefix) {
  return add_block(b, x, spec, prefix, false);
}

ModelGraph build_d_block(const BlockSpec& spec) { return single_block_graph(spec, true); }
ModelGraph build_y_block(const BlockSpec& spec) { return single_block_graph(spec, false); }

// ---------------------------------------------------------------------------
// Presets

std::size_t ArchitecturePreset::schedule_length() const {
  return static_cast<std::size_t>(std::max(stage16.repeat - 1, 0) +
                                  final_stage.repeat);
}

int ArchitecturePreset::block_count() const {
  return stage4.repeat + stage8.repeat + stage16.repeat + final_stage.repeat;
}

void ArchitecturePreset::validate() const {
  auto check_stage = [](const StageSpec& s, const char* what, int min_repeat) {
    if (s.channels < 1 || s.repeat < min_repeat) {
      throw ConfigError(std::string(what) + " needs channels >= 1 and repeat >= " +
                        std::to_string(min_repeat));
    }
  };
  if (input_channels < 1 || stem_channels < 1) {
    throw ConfigError("input and stem channels must be >= 1");
  }
  if (group_width < 1) throw ConfigError("group_width must be >= 1");
  check_stage(stage4, "stage4", 1);
  check_stage(stage8, "stage8", 1);
  check_stage(stage16, "stage16", 1);
  check_stage(final_stage, "final", 0);
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (!se_channels.empty() &&
      static_cast<int>(se_channels.size()) != block_count()) {
    throw ConfigError("se_channels lists " + std::to_string(se_channels.size()) +
                      " widths for " + std::to_string(block_count()) + " blocks");
  }
}

ArchitecturePreset default_preset() { return ArchitecturePreset{}; }

std::vector<std::string> preset_names() { return {"regseg", "regseg-camvid"}; }

ArchitecturePreset preset_by_name(std::string_view name) {
  ArchitecturePreset p;
  if (name == "regseg" || name == "regseg-cityscapes") return p;
  if (name == "regseg-camvid") {
    p.name = "regseg-camvid";
    p.num_classes = 11;
    return p;
  }
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

int parse_positive(const std::string& key, const std::string& v, int min_value) {
  std::size_t used = 0;
  int x = 0;
  try {
    x = std::stoi(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty() || x < min_value) {
    throw ConfigError("preset key '" + key + "': invalid integer '" + v + "'");
  }
  return x;
}

StageSpec parse_stage(const std::string& key, const std::string& v) {
  const auto x = v.find('x');
  if (x == std::string::npos) {
    throw ConfigError("preset key '" + key + "' must look like CHANNELSxREPEAT");
  }
  return StageSpec{parse_positive(key, trim(v.substr(0, x)), 1),
                   parse_positive(key, trim(v.substr(x + 1)), 0)};
}

std::string stage_str(const StageSpec& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.repeat);
}

}  // namespace

ArchitecturePreset parse_preset(std::string_view text) {
  ArchitecturePreset p;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("preset line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key == "name") {
      p.name = value;
    } else if (key == "input_channels") {
      p.input_channels = parse_positive(key, value, 1);
    } else if (key == "stem_channels") {
      p.stem_channels = parse_positive(key, value, 1);
    } else if (key == "group_width") {
      p.group_width = parse_positive(key, value, 1);
    } else if (key == "stage4") {
      p.stage4 = parse_stage(key, value);
    } else if (key == "stage8") {
      p.stage8 = parse_stage(key, value);
    } else if (key == "stage16") {
      p.stage16 = parse_stage(key, value);
    } else if (key == "final") {
      p.final_stage = parse_stage(key, value);
    } else if (key == "schedule") {
      p.schedule = value;
    } else if (key == "num_classes") {
      p.num_classes = parse_positive(key, value, 2);
    } else if (key == "se_channels") {
      p.se_channels.clear();
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        p.se_channels.push_back(parse_positive(key, trim(item), 1));
      }
    } else {
      throw ConfigError("preset line " + std::to_string(lineno) +
                        ": unknown key '" + key + "'");
    }
  }
  p.validate();
  return p;
}

ArchitecturePreset load_preset_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open preset file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_preset(ss.str());
}

std::string format_preset(const ArchitecturePreset& p) {
  std::ostringstream o;
  o << "name = " << p.name << "\n"
    << "input_channels = " << p.input_channels << "\n"
    << "stem_channels = " << p.stem_channels << "\n"
    << "group_width = " << p.group_width << "\n"
    << "stage4 = " << stage_str(p.stage4) << "\n"
    << "stage8 = " << stage_str(p.stage8) << "\n"
    << "stage16 = " << stage_str(p.stage16) << "\n"
    << "final = " << stage_str(p.final_stage) << "\n"
    << "schedule = " << p.schedule << "\n"
    << "num_classes = " << p.num_classes << "\n";
  if (!p.se_channels.empty()) {
    o << "se_channels = ";
    for (std::size_t i = 0; i < p.se_channels.size(); ++i) {
      o << (i ? "," : "") << p.se_channels[i];
    }
    o << "\n";
  }
  return o.str();
}

// ---------------------------------------------------------------------------
// Backbone and decoder

std::vector<BlockSpec> expand_blocks(const ArchitecturePreset& preset) {
  preset.validate();
  const DilationSchedule schedule = parse_schedule(preset.schedule);
  if (schedule.size() != preset.schedule_length()) {
    throw SpecError("dilation schedule has " + std::to_string(schedule.size()) +
                    " blocks, backbone needs " +
                    std::to_string(preset.schedule_length()));
  }
  std::vector<BlockSpec> blocks;
  int in = preset.stem_channels;
  std::size_t next = 0;
  auto stage = [&](const StageSpec& s, bool strided_first, bool scheduled_first) {
    for (int i = 0; i < s.repeat; ++i) {
      BlockSpec spec;
      spec.in_channels = in;
      spec.out_channels = s.channels;
      spec.stride = (strided_first && i == 0) ? 2 : 1;
      spec.group_width = preset.group_width;
      const bool scheduled = scheduled_first || i > 0;
      spec.dilations = scheduled ? schedule.blocks[next++] : DilationTuple{1};
      blocks.push_back(spec);
      in = s.channels;
    }
  };
  auto fixed = [&](const StageSpec& s) {
    for (int i = 0; i < s.repeat; ++i) {
      BlockSpec spec;
      spec.in_channels = in;
      spec.out_channels = s.channels;
      spec.stride = i == 0 ? 2 : 1;
      spec.group_width = preset.group_width;
      blocks.push_back(spec);
      in = s.channels;
    }
  };
  fixed(preset.stage4);
  fixed(preset.stage8);
  stage(preset.stage16, true, false);
  stage(preset.final_stage, false, true);
  if (!preset.se_channels.empty()) {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      blocks[i].se_channels = preset.se_channels[i];
    }
  }
  return blocks;
}

std::vector<std::string> block_prefixes(const ArchitecturePreset& preset) {
  std::vector<std::string> out;
  auto push = [&](const char* stage, int count, int start) {
    for (int i = 0; i < count; ++i) {
      out.push_back(std::string(stage) + ".block" + std::to_string(start + i));
    }
  };
  push("stage4", preset.stage4.repeat, 0);
  push("stage8", preset.stage8.repeat, 0);
  push("stage16", preset.stage16.repeat + preset.final_stage.repeat, 0);
  return out;
}

BackboneTaps add_backbone(GraphBuilder& b, int x, const ArchitecturePreset& preset,
                          int max_blocks) {
  const auto blocks = expand_blocks(preset);
  const auto prefixes = block_prefixes(preset);
  const int count = max_blocks < 0
                        ? static_cast<int>(blocks.size())
                        : std::min(max_blocks, static_cast<int>(blocks.size()));

  ConvSpec stem;
  stem.in_channels = preset.input_channels;
  stem.out_channels = preset.stem_channels;
  stem.kernel = 3;
  stem.stride = 2;
  int cur = b.conv(x, "stem.conv", stem);
  cur = b.batchnorm(cur, "stem.bn");
  cur = b.relu(cur, "stem.relu");

  BackboneTaps taps;
  const int end4 = preset.stage4.repeat;
  const int end8 = end4 + preset.stage8.repeat;
  for (int i = 0; i < count; ++i) {
    cur = add_d_block(b, cur, blocks[i], prefixes[i]);
    if (i == end4 - 1) taps.feat4 = cur;
    if (i == end8 - 1) taps.feat8 = cur;
    if (i == static_cast<int>(blocks.size()) - 1) taps.feat16 = cur;
  }
  taps.last = cur;
  return taps;
}

namespace {

void mark_backbone_outputs(GraphBuilder& b, const BackboneTaps& taps) {
  if (taps.feat4 >= 0) b.mark_output("feat4", taps.feat4);
  if (taps.feat8 >= 0) b.mark_output("feat8", taps.feat8);
  if (taps.feat16 >= 0) b.mark_output("feat16", taps.feat16);
  b.mark_output("backbone", taps.last);
}

ArchitecturePreset preset_with_schedule(const DilationSchedule& schedule,
                                        int group_width, int num_classes) {
  ArchitecturePreset p;
  p.schedule = format_schedule(schedule);
  p.group_width = group_width;
  p.num_classes = num_classes;
  return p;
}

int conv_bn_relu(GraphBuilder& b, int x, const std::string& name, int out,
                 int kernel) {
  ConvSpec s;
  s.in_channels = b.channels(x);
  s.out_channels = out;
  s.kernel = kernel;
  const int c = conv_bn(b, x, name, s);
  return b.relu(c, name + ".relu");
}

}  // namespace

ModelGraph build_backbone(const DilationSchedule& schedule, int group_width) {
  return build_backbone(preset_with_schedule(schedule, group_width, 19));
}

ModelGraph build_backbone(const ArchitecturePreset& preset, int max_blocks) {
  GraphBuilder b(preset.input_channels);
  const BackboneTaps taps = add_backbone(b, b.input(), preset, max_blocks);
  mark_backbone_outputs(b, taps);
  return std::move(b).build();
}

int add_decoder(GraphBuilder& b, int feat4, int feat8, int feat16, int image,
                int num_classes) {
  if (num_classes < 2) throw SpecError("decoder needs at least 2 classes");
  const int h16 = conv_bn_relu(b, feat16, "decoder.head16", 128, 1);
  const int h8 = conv_bn_relu(b, feat8, "decoder.head8", 128, 1);
  const int h4 = conv_bn_relu(b, feat4, "decoder.head4", 8, 1);
  const int up16 = b.upsample_like(h16, h8, "decoder.up16");
  const int sum8 = b.add(h8, up16, "decoder.sum8");
  const int c8 = conv_bn_relu(b, sum8, "decoder.conv8", 64, 3);
  const int up8 = b.upsample_like(c8, h4, "decoder.up8");
  const int cat4 = b.concat({up8, h4}, "decoder.cat4");
  const int c4 = conv_bn_relu(b, cat4, "decoder.conv4", 64, 3);
  ConvSpec cls;
  cls.in_channels = 64;
  cls.out_channels = num_classes;
  cls.kernel = 1;
  cls.bias = true;
  const int logits = b.conv(c4, "decoder.classifier", cls);
  return b.upsample_like(logits, image, "decoder.resize");
}

ModelGraph build_regseg(const DilationSchedule& schedule, int num_classes) {
  return build_regseg(preset_with_schedule(schedule, 16, num_classes));
}

ModelGraph build_regseg(const ArchitecturePreset& preset) {
  GraphBuilder b(preset.input_channels);
  const BackboneTaps taps = add_backbone(b, b.input(), preset);
  mark_backbone_outputs(b, taps);
  const int logits =
      add_decoder(b, taps.feat4, taps.feat8, taps.feat16, b.input(), preset.num_classes);
  b.mark_output("logits", logits);
  return std::move(b).build();
}

}  // namespace regseg
