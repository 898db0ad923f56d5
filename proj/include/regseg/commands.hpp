#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "regseg/architecture.hpp"
#include "regseg/bench.hpp"
#include "regseg/fov.hpp"
#include "regseg/metrics.hpp"

namespace regseg {

enum class ReportFormat { kText, kCsv };

struct RunConfig {
  std::string preset = "regseg";
  std::string preset_file;          // overrides `preset` when set
  std::string schedule;             // overrides the preset schedule when set
  std::string weights;
  std::string input;
  std::string labels;
  std::string output;
  std::string palette;              // infer: colour map file, default palette if empty
  bool color = false;               // infer: also write a colourised PNG
  int height = 1024;
  int width = 2048;
  int classes = 0;                  // 0 keeps the preset's class count
  int warmup = 10;
  int iters = 100;
  int threads = 1;
  std::set<int> exclude_classes = kReducedExcludedClasses;
  ReportFormat report = ReportFormat::kText;
  std::uint64_t seed = 0;           // init-weights
  bool skip_blocks = false;         // bench: omit the single-block comparison

  // ConfigError on iteration counts < 1, threads < 1 or extents that are
  // not positive multiples of 16.
  void validate() const;
};

// "1024x2048" -> {1024, 2048}. ConfigError when malformed.
std::pair<int, int> parse_size(const std::string& text);
// "14,15,16" -> {14, 15, 16}; empty text -> {}.
std::set<int> parse_class_list(const std::string& text);
ReportFormat parse_report_format(const std::string& text);

// Preset (named or from file) with the schedule and class overrides applied.
ArchitecturePreset resolve_preset(const RunConfig& config);

struct LayerTableRow {
  std::string op;
  std::string dilations;
  int stride = 1;
  int channels = 0;
  int repeat = 1;
};

struct DescribeReport {
  ArchitecturePreset preset;
  std::vector<LayerTableRow> table;
  std::int64_t params = 0;
  MacCount macs;
  int height = 0;
  int width = 0;
  FovReport fov;
  std::vector<HoleViolation> violations;
};

DescribeReport describe(const RunConfig& config);
std::string format_describe(const DescribeReport& report, ReportFormat format);

struct EvalReport {
  int images = 0;
  IouResult iou;
  std::set<int> excluded;
};

// Pairs files of `predictions` and `labels` by file name (directories or
// single files). ConfigError when the name sets differ.
EvalReport evaluate(const RunConfig& config);
std::string format_eval(const EvalReport& report, ReportFormat format);

struct BenchReport {
  int height = 0;
  int width = 0;
  int threads = 1;
  ModelTiming model;
  std::vector<BlockBenchRow> blocks;
};

BenchReport bench(const RunConfig& config);
std::string format_bench(const BenchReport& report, ReportFormat format);

struct SelftestResult {
  std::string suite;
  bool passed = false;
  std::string detail;
};

std::vector<SelftestResult> selftest(int threads = 1);

// Each returns the process exit code; errors propagate as exceptions.
int cmd_describe(const RunConfig& config, std::ostream& out);
int cmd_fov(const RunConfig& config, std::ostream& out);
int cmd_infer(const RunConfig& config, std::ostream& out);
int cmd_eval(const RunConfig& config, std::ostream& out);
int cmd_bench(const RunConfig& config, std::ostream& out);
int cmd_selftest(const RunConfig& config, std::ostream& out);
// Writes a container of deterministic random weights for the preset.
int cmd_init_weights(const RunConfig& config, std::ostream& out);

}  // namespace regseg
