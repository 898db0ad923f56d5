#include "regseg/executor.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <random>

#include "regseg/errors.hpp"
#include "regseg/nn_ops.hpp"

namespace regseg {

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

std::vector<std::string> unresolved_slots(const ModelGraph& graph,
                                          const WeightMap& weights) {
  std::vector<std::string> bad;
  for (const ParamSlot& slot : graph.param_slots()) {
    auto it = weights.find(slot.name);
    if (it == weights.end()) {
      bad.push_back(slot.name + " (missing)");
    } else if (it->second.shape() != slot.shape) {
      bad.push_back(slot.name + " (expected " + slot.shape.str() + ", got " +
                    it->second.shape().str() + ")");
    }
  }
  return bad;
}

Executor::Executor(ModelGraph graph, const WeightMap& weights, ExecOptions options)
    : graph_(std::move(graph)), options_(options) {
  auto bad = unresolved_slots(graph_, weights);
  if (!bad.empty()) throw BindingError(std::move(bad));
  bound_.resize(graph_.size());
  for (std::size_t i = 0; i < graph_.size(); ++i) {
    const Layer& l = graph_.layer(static_cast<int>(i));
    for (const ParamSlot& slot : l.params) {
      bound_[i].params.push_back(weights.at(slot.name));
    }
    if (l.kind == LayerKind::kConv && l.conv.bias) {
      auto b = bound_[i].params.at(1).data();
      bound_[i].bias.assign(b.begin(), b.end());
    }
  }
  if (options_.fold_batchnorm) fold_batchnorms();
}

void Executor::fold_batchnorms() {
  std::vector<int> consumers(graph_.size(), 0);
  for (const Layer& l : graph_.layers()) {
    for (int in : l.inputs) ++consumers[in];
    if (l.resize_like >= 0) ++consumers[l.resize_like];
  }
  for (const auto& [name, id] : graph_.outputs()) ++consumers[id];

  for (std::size_t i = 0; i < graph_.size(); ++i) {
    const Layer& bn = graph_.layer(static_cast<int>(i));
    if (bn.kind != LayerKind::kBatchNorm) continue;
    const int src = bn.inputs.front();
    const Layer& conv = graph_.layer(src);
    if (conv.kind != LayerKind::kConv && conv.kind != LayerKind::kMultiDilationConv) {
      continue;
    }
    if (consumers[src] != 1) continue;

    const auto& p = bound_[i].params;
    const auto gamma = p[0].data();
    const auto beta = p[1].data();
    const auto mean = p[2].data();
    const auto var = p[3].data();
    const float eps = p[4].data()[0];
    const int c = conv.channels;
    std::vector<float> scale(c);
    for (int ch = 0; ch < c; ++ch) scale[ch] = gamma[ch] / std::sqrt(var[ch] + eps);

    Bound& target = bound_[src];
    if (target.bias.empty()) target.bias.assign(c, 0.0f);
    for (int ch = 0; ch < c; ++ch) {
      target.bias[ch] = (target.bias[ch] - mean[ch]) * scale[ch] + beta[ch];
    }
    // Weights are laid out output-channel major in every branch.
    int base = 0;
    const std::size_t weight_tensors =
        conv.kind == LayerKind::kConv ? 1 : target.params.size();
    for (std::size_t t = 0; t < weight_tensors; ++t) {
      Tensor& w = target.params[t];
      const int outs = w.shape().n;
      const std::size_t per = w.size() / outs;
      auto d = w.data();
      for (int o = 0; o < outs; ++o) {
        for (std::size_t k = 0; k < per; ++k) d[o * per + k] *= scale[base + o];
      }
      base += outs;
    }
    bound_[i].skip = true;
  }
}

Tensor Executor::run_layer(int id, const std::vector<const Tensor*>& in) const {
  const Layer& l = graph_.layer(id);
  const Bound& b = bound_[id];
  const int threads = options_.threads;
  switch (l.kind) {
    case LayerKind::kInput:
      return *in[0];
    case LayerKind::kConv: {
      ConvSpec spec = l.conv;
      spec.bias = !b.bias.empty();
      return conv2d_fast(*in[0], b.params[0], b.bias, spec, threads);
    }
    case LayerKind::kMultiDilationConv: {
      Tensor out = multi_dilation_group_conv(*in[0], b.params, l.dilations, l.conv,
                                             threads);
      if (!b.bias.empty()) {
        const Shape s = out.shape();
        for (int n = 0; n < s.n; ++n) {
          for (int c = 0; c < s.c; ++c) {
            float* p = out.plane(n, c);
            for (std::size_t k = 0; k < s.plane(); ++k) p[k] += b.bias[c];
          }
        }
      }
      return out;
    }
    case LayerKind::kBatchNorm:
      if (b.skip) return *in[0];
      return batchnorm_infer(*in[0], b.params[0].data(), b.params[1].data(),
                             b.params[2].data(), b.params[3].data(),
                             b.params[4].data()[0]);
    case LayerKind::kRelu:
      return relu(*in[0]);
    case LayerKind::kSqueezeExcite:
      return se_block(*in[0], b.params[0], b.params[1].data(), b.params[2],
                      b.params[3].data());
    case LayerKind::kAvgPool2x2:
      return avgpool2x2(*in[0]);
    case LayerKind::kAdd:
      return add(*in[0], *in[1]);
    case LayerKind::kConcat: {
      std::vector<Tensor> parts;
      parts.reserve(in.size());
      for (const Tensor* t : in) parts.push_back(*t);
      return concat_channels(parts);
    }
    case LayerKind::kUpsample:
      // Target extents are resolved by execute() and passed as in[1].
      return bilinear_resize(*in[0], in[1]->shape().h, in[1]->shape().w);
    case LayerKind::kIdentity:
      return *in[0];
  }
  throw SpecError("unsupported layer kind");
}

std::vector<Tensor> Executor::execute(const Tensor& input,
                                      const std::vector<int>& wanted,
                                      const LayerHook& hook) const {
  const std::vector<Shape> shapes = graph_.infer_shapes(input.shape());
  const std::size_t count = graph_.size();

  std::vector<int> last_use(count, -1);
  for (std::size_t i = 0; i < count; ++i) {
    for (int in : graph_.layer(static_cast<int>(i)).inputs) {
      last_use[in] = static_cast<int>(i);
    }
  }
  int stop = 0;
  for (int w : wanted) {
    last_use[w] = static_cast<int>(count);
    stop = std::max(stop, w);
  }

  std::vector<std::optional<Tensor>> act(count);
  for (int i = 0; i <= stop; ++i) {
    const Layer& l = graph_.layer(i);
    const auto t0 = std::chrono::steady_clock::now();
    if (l.kind == LayerKind::kInput) {
      act[i] = input;
    } else {
      std::vector<const Tensor*> in;
      for (int src : l.inputs) in.push_back(&*act[src]);
      Tensor target_shape;
      if (l.kind == LayerKind::kUpsample) {
        const Shape s = shapes[i];
        target_shape = Tensor(Shape{1, 1, s.h, s.w}, 0.0f);
        in.push_back(&target_shape);
      }
      if (l.kind == LayerKind::kBatchNorm && bound_[i].skip &&
          last_use[l.inputs[0]] == i) {
        act[i] = std::move(*act[l.inputs[0]]);
      } else {
        act[i] = run_layer(i, in);
      }
    }
    const auto t1 = std::chrono::steady_clock::now();
    if (hook) hook(i, l, *act[i], std::chrono::duration<double>(t1 - t0).count());
    for (int src : l.inputs) {
      if (last_use[src] == i) act[src].reset();
    }
  }
  std::vector<Tensor> out;
  out.reserve(wanted.size());
  for (int w : wanted) out.push_back(*act[w]);
  return out;
}

Tensor Executor::run(const Tensor& input, const LayerHook& hook) const {
  return execute(input, {graph_.primary_output()}, hook).front();
}

std::map<std::string, Tensor> Executor::run_outputs(const Tensor& input,
                                                    const LayerHook& hook) const {
  std::vector<int> ids;
  for (const auto& [name, id] : graph_.outputs()) ids.push_back(id);
  if (ids.empty()) ids.push_back(graph_.primary_output());
  auto values = execute(input, ids, hook);
  std::map<std::string, Tensor> out;
  std::size_t k = 0;
  for (const auto& [name, id] : graph_.outputs()) out.emplace(name, values[k++]);
  if (out.empty()) out.emplace("output", values.front());
  return out;
}

Tensor forward(const ModelGraph& graph, const WeightMap& weights,
               const Tensor& input, ExecOptions options) {
  return Executor(graph, weights, options).run(input);
}

WeightMap random_weights(const ModelGraph& graph, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform = [&](float lo, float hi) {
    return std::uniform_real_distribution<float>(lo, hi)(rng);
  };
  WeightMap out;
  for (const Layer& l : graph.layers()) {
    for (const ParamSlot& slot : l.params) {
      Tensor t(slot.shape, 0.0f);
      auto d = t.data();
      const std::string& n = slot.name;
      if (ends_with(n, ".eps")) {
        d[0] = 1e-5f;
      } else if (ends_with(n, ".gamma") || ends_with(n, ".var")) {
        for (float& v : d) v = uniform(0.5f, 1.5f);
      } else if (ends_with(n, ".beta") || ends_with(n, ".mean")) {
        for (float& v : d) v = uniform(-0.1f, 0.1f);
      } else {
        // conv / fc weights and biases: bound 1/sqrt(fan_in)
        int fan_in = 1;
        if (ends_with(n, ".w")) {
          fan_in = slot.shape.c * slot.shape.h * slot.shape.w;
        } else if (l.kind == LayerKind::kConv) {
          fan_in = l.conv.in_channels / l.conv.groups * l.conv.kernel * l.conv.kernel;
        } else if (l.kind == LayerKind::kSqueezeExcite) {
          fan_in = ends_with(n, ".fc1.b") ? l.channels : l.se_channels;
        }
        const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
        for (float& v : d) v = uniform(-bound, bound);
      }
      out.emplace(n, std::move(t));
    }
  }
  return out;
}

}  // namespace regseg
