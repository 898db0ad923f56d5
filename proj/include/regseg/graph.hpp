#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "regseg/nn_ops.hpp"
#include "regseg/tensor.hpp"

namespace regseg {

enum class LayerKind {
  kInput,
  kConv,
  kMultiDilationConv,
  kBatchNorm,
  kRelu,
  kSqueezeExcite,
  kAvgPool2x2,
  kAdd,
  kConcat,
  kUpsample,
  kIdentity,
};

const char* layer_kind_name(LayerKind kind);

// A named parameter tensor a layer expects to find in the weight map.
struct ParamSlot {
  std::string name;
  Shape shape;
  bool learnable = true;  // false for batch-norm running stats and eps
};

struct Layer {
  LayerKind kind = LayerKind::kIdentity;
  std::string name;
  std::vector<int> inputs;
  int channels = 0;  // output channel count

  ConvSpec conv;               // kConv, kMultiDilationConv (totals)
  std::vector<int> dilations;  // kMultiDilationConv, one per branch
  int se_channels = 0;         // kSqueezeExcite reduced width
  int resize_like = -1;        // kUpsample: match this layer's H x W ...
  int factor = 0;              // ... or scale by a fixed factor

  std::vector<ParamSlot> params;

  // Largest dilation of a conv-like layer, 1 otherwise.
  int max_dilation() const;
};

// Immutable DAG of layers in topological order. Built by GraphBuilder.
class ModelGraph {
 public:
  const std::vector<Layer>& layers() const { return layers_; }
  const Layer& layer(int id) const { return layers_.at(id); }
  std::size_t size() const { return layers_.size(); }

  int input_id() const { return 0; }
  int input_channels() const { return layers_.front().channels; }

  // Named outputs. Backbone graphs expose "feat4", "feat8", "feat16" and
  // "backbone"; full models also expose "logits".
  const std::map<std::string, int>& outputs() const { return outputs_; }
  bool has_output(std::string_view name) const;
  int output(std::string_view name) const;
  // "logits" if present, else "backbone", else the last layer.
  int primary_output() const;

  std::vector<ParamSlot> param_slots() const;
  int find_layer(std::string_view name) const;  // -1 if absent

  // Shapes of every layer output for an input of the given shape. Throws
  // ShapeError when the graph cannot run at that size.
  std::vector<Shape> infer_shapes(const Shape& input) const;

  // Layers that `target` depends on, target included, in topological order.
  std::vector<int> ancestors(int target) const;

 private:
  friend class GraphBuilder;
  std::vector<Layer> layers_;
  std::map<std::string, int> outputs_;
};

class GraphBuilder {
 public:
  explicit GraphBuilder(int input_channels);

  int input() const { return 0; }
  int channels(int id) const { return layers_.at(id).channels; }

  // Adds slots name.w (and name.b when spec.bias).
  int conv(int x, const std::string& name, const ConvSpec& spec);
  // Adds slots name.branch{j}.w; spec holds totals across branches.
  int multi_dilation_conv(int x, const std::string& name, const ConvSpec& spec,
                          const std::vector<int>& dilations);
  // Adds slots name.{gamma,beta,mean,var,eps}.
  int batchnorm(int x, const std::string& name);
  int relu(int x, const std::string& name);
  // Adds slots name.fc1.{w,b}, name.fc2.{w,b}.
  int squeeze_excite(int x, const std::string& name, int reduced);
  int avgpool2x2(int x, const std::string& name);
  int add(int a, int b, const std::string& name);
  int concat(const std::vector<int>& parts, const std::string& name);
  int upsample_like(int x, int reference, const std::string& name);
  int upsample(int x, int factor, const std::string& name);
  int identity(int x, const std::string& name);

  void mark_output(const std::string& name, int id);

  // Validates slot-name uniqueness and returns the finished graph.
  ModelGraph build() &&;

 private:
  int push(Layer layer);
  void check_id(int id) const;

  std::vector<Layer> layers_;
  std::map<std::string, int> outputs_;
};

}  // namespace regseg
