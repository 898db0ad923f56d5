#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "regseg/graph.hpp"
#include "regseg/tensor.hpp"

namespace regseg {

using WeightMap = std::map<std::string, Tensor>;

struct ExecOptions {
  int threads = 1;
  // Fold each conv -> batchnorm pair into the conv's weights and bias.
  bool fold_batchnorm = false;
};

// Called after every layer with its output and wall time.
using LayerHook =
    std::function<void(int layer_id, const Layer& layer, const Tensor& output,
                       double seconds)>;

// A graph with its weights resolved. Binding happens in the constructor, so
// a missing or mis-shaped slot fails before any compute. Immutable after
// construction; run() may be called concurrently.
class Executor {
 public:
  Executor(ModelGraph graph, const WeightMap& weights, ExecOptions options = {});

  const ModelGraph& graph() const { return graph_; }
  const ExecOptions& options() const { return options_; }

  // Value of the primary output.
  Tensor run(const Tensor& input, const LayerHook& hook = {}) const;
  // Every named output.
  std::map<std::string, Tensor> run_outputs(const Tensor& input,
                                            const LayerHook& hook = {}) const;

 private:
  struct Bound {
    std::vector<Tensor> params;  // in slot order
    std::vector<float> bias;     // conv bias (possibly from folding)
    bool skip = false;           // batchnorm folded into its producer
  };

  std::vector<Tensor> execute(const Tensor& input, const std::vector<int>& wanted,
                              const LayerHook& hook) const;
  Tensor run_layer(int id, const std::vector<const Tensor*>& in) const;
  void fold_batchnorms();

  ModelGraph graph_;
  ExecOptions options_;
  std::vector<Bound> bound_;
};

// One-shot convenience wrapper around Executor.
Tensor forward(const ModelGraph& graph, const WeightMap& weights,
               const Tensor& input, ExecOptions options = {});

// Names of slots that are missing or mis-shaped in `weights`, with the
// reason appended ("name (missing)", "name (expected AxBxCxD, got ...)").
std::vector<std::string> unresolved_slots(const ModelGraph& graph,
                                          const WeightMap& weights);

// Deterministic random weights for every slot: scaled-uniform convs, BN
// gamma in [0.5, 1.5], small beta/mean, var in [0.5, 1.5], eps 1e-5.
WeightMap random_weights(const ModelGraph& graph, std::uint64_t seed);

}  // namespace regseg
