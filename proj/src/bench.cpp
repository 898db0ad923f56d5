#include "regseg/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "regseg/errors.hpp"

namespace regseg {

namespace {

using Clock = std::chrono::steady_clock;

void check_counts(int warmup, int iters) {
  if (warmup < 1) throw ConfigError("warmup iterations must be >= 1");
  if (iters < 1) throw ConfigError("measured iterations must be >= 1");
}

}  // namespace

TimingStats summarize_samples(std::vector<double> samples, int warmup) {
  TimingStats t;
  t.warmup = warmup;
  t.samples = std::move(samples);
  if (t.samples.empty()) return t;
  const double n = static_cast<double>(t.samples.size());
  t.mean = std::accumulate(t.samples.begin(), t.samples.end(), 0.0) / n;
  double sq = 0.0;
  for (double s : t.samples) sq += (s - t.mean) * (s - t.mean);
  t.stddev = std::sqrt(sq / n);
  const auto [lo, hi] = std::minmax_element(t.samples.begin(), t.samples.end());
  t.min = *lo;
  t.max = *hi;
  return t;
}

TimingStats time_protocol(const std::function<void()>& fn, int warmup, int iters) {
  check_counts(warmup, iters);
  for (int i = 0; i < warmup; ++i) fn();
  std::vector<double> samples;
  samples.reserve(iters);
  for (int i = 0; i < iters; ++i) {
    const auto t0 = Clock::now();
    fn();
    samples.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
  }
  return summarize_samples(std::move(samples), warmup);
}

std::string block_of(const std::string& layer_name) {
  const std::size_t first = layer_name.find('.');
  if (first == std::string::npos) return layer_name;
  const std::string head = layer_name.substr(0, first);
  if (head.rfind("stage", 0) == 0) {
    const std::size_t second = layer_name.find('.', first + 1);
    return layer_name.substr(0, second);
  }
  return head;
}

ModelTiming time_model(const Executor& exec, const Tensor& input, int warmup, int iters) {
  check_counts(warmup, iters);
  std::vector<std::string> order;
  std::map<std::string, std::size_t> slot;
  for (const Layer& l : exec.graph().layers()) {
    if (l.kind == LayerKind::kInput) continue;
    const std::string b = block_of(l.name);
    if (slot.emplace(b, order.size()).second) order.push_back(b);
  }
  std::vector<double> acc(order.size());
  std::vector<std::vector<double>> per_block(order.size());
  const LayerHook hook = [&](int, const Layer& l, const Tensor&, double seconds) {
    if (l.kind == LayerKind::kInput) return;
    acc[slot.at(block_of(l.name))] += seconds;
  };

  for (int i = 0; i < warmup; ++i) exec.run(input);
  std::vector<double> totals;
  for (int i = 0; i < iters; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const auto t0 = Clock::now();
    exec.run(input, hook);
    totals.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
    for (std::size_t b = 0; b < order.size(); ++b) per_block[b].push_back(acc[b]);
  }
  ModelTiming m;
  m.total = summarize_samples(std::move(totals), warmup);
  for (std::size_t b = 0; b < order.size(); ++b) {
    m.blocks.emplace_back(order[b], summarize_samples(std::move(per_block[b]), warmup));
  }
  return m;
}

std::vector<BlockBenchRow> block_comparison_rows() {
  auto spec = [](DilationTuple d) {
    BlockSpec s;
    s.in_channels = 256;
    s.out_channels = 256;
    s.stride = 1;
    s.group_width = 16;
    s.dilations = std::move(d);
    return s;
  };
  return {
      {"Y block", spec({1}), true, {}},
      {"D block (1,1)", spec({1, 1}), false, {}},
      {"D block (1,4)", spec({1, 4}), false, {}},
      {"D block (1,10)", spec({1, 10}), false, {}},
  };
}

std::vector<BlockBenchRow> run_block_comparison(int warmup, int iters, int threads,
                                                const Shape& input) {
  check_counts(warmup, iters);
  std::vector<BlockBenchRow> rows = block_comparison_rows();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    BlockBenchRow& row = rows[i];
    row.spec.in_channels = input.c;
    ModelGraph g = row.y_block ? build_y_block(row.spec) : build_d_block(row.spec);
    const WeightMap w = random_weights(g, 1000 + i);
    const Executor exec(std::move(g), w, ExecOptions{threads, false});
    const Tensor x(input, 0.5f);
    row.stats = time_protocol([&] { exec.run(x); }, warmup, iters);
  }
  return rows;
}

}  // namespace regseg
