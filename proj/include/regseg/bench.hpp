#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "regseg/architecture.hpp"
#include "regseg/executor.hpp"

namespace regseg {

struct TimingStats {
  int warmup = 0;
  std::vector<double> samples;  // seconds, measured iterations only
  double mean = 0.0;
  double stddev = 0.0;  // population
  double min = 0.0;
  double max = 0.0;
};

TimingStats summarize_samples(std::vector<double> samples, int warmup = 0);

// Runs `fn` `warmup` times untimed, then `iters` times on a monotonic clock.
// ConfigError unless both counts are >= 1.
TimingStats time_protocol(const std::function<void()>& fn, int warmup, int iters);

// Per-block wall time gathered through layer hooks during the measured
// iterations. Keys are block prefixes ("stem", "stage16.block3", "decoder").
struct ModelTiming {
  TimingStats total;
  std::vector<std::pair<std::string, TimingStats>> blocks;  // graph order
};

ModelTiming time_model(const Executor& exec, const Tensor& input, int warmup, int iters);

// "stage16.block3.conv2" -> "stage16.block3", "decoder.conv8" -> "decoder".
std::string block_of(const std::string& layer_name);

// The single-block comparison: a Y block and D blocks with dilations (1,1),
// (1,4) and (1,10), all w=256, g=16, stride 1, run on a 1x256x64x128 input.
struct BlockBenchRow {
  std::string label;
  BlockSpec spec;
  bool y_block = false;
  TimingStats stats;
};

std::vector<BlockBenchRow> block_comparison_rows();
std::vector<BlockBenchRow> run_block_comparison(int warmup, int iters, int threads,
                                                const Shape& input = {1, 256, 64, 128});

}  // namespace regseg
