#include "regseg/graph.hpp"

#include <algorithm>
#include <set>

#include "regseg/errors.hpp"

namespace regseg {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kInput: return "input";
    case LayerKind::kConv: return "conv";
    case LayerKind::kMultiDilationConv: return "dilated_group_conv";
    case LayerKind::kBatchNorm: return "batchnorm";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kSqueezeExcite: return "squeeze_excite";
    case LayerKind::kAvgPool2x2: return "avgpool2x2";
    case LayerKind::kAdd: return "add";
    case LayerKind::kConcat: return "concat";
    case LayerKind::kUpsample: return "upsample";
    case LayerKind::kIdentity: return "identity";
  }
  return "?";
}

int Layer::max_dilation() const {
  if (kind == LayerKind::kConv) return conv.dilation;
  if (kind == LayerKind::kMultiDilationConv && !dilations.empty()) {
    return *std::max_element(dilations.begin(), dilations.end());
  }
  return 1;
}

bool ModelGraph::has_output(std::string_view name) const {
  return outputs_.find(std::string(name)) != outputs_.end();
}

int ModelGraph::output(std::string_view name) const {
  auto it = outputs_.find(std::string(name));
  if (it == outputs_.end()) {
    throw ValueError("graph has no output named '" + std::string(name) + "'");
  }
  return it->second;
}

int ModelGraph::primary_output() const {
  if (has_output("logits")) return output("logits");
  if (has_output("backbone")) return output("backbone");
  return static_cast<int>(layers_.size()) - 1;
}

std::vector<ParamSlot> ModelGraph::param_slots() const {
  std::vector<ParamSlot> out;
  for (const Layer& l : layers_) {
    out.insert(out.end(), l.params.begin(), l.params.end());
  }
  return out;
}

int ModelGraph::find_layer(std::string_view name) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<int> ModelGraph::ancestors(int target) const {
  std::vector<bool> keep(layers_.size(), false);
  keep.at(target) = true;
  for (int i = target; i >= 0; --i) {
    if (!keep[i]) continue;
    const Layer& l = layers_[i];
    for (int in : l.inputs) keep[in] = true;
    if (l.resize_like >= 0) keep[l.resize_like] = true;
  }
  std::vector<int> out;
  for (int i = 0; i <= target; ++i) {
    if (keep[i]) out.push_back(i);
  }
  return out;
}

std::vector<Shape> ModelGraph::infer_shapes(const Shape& input) const {
  if (!input.valid()) throw ShapeError("invalid input shape " + input.str());
  if (input.c != input_channels()) {
    throw ShapeError("input has " + std::to_string(input.c) +
                     " channels, graph expects " +
                     std::to_string(input_channels()));
  }
  std::vector<Shape> shapes(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    auto in = [&](int k) { return shapes[l.inputs.at(k)]; };
    Shape s;
    switch (l.kind) {
      case LayerKind::kInput:
        s = input;
        break;
      case LayerKind::kConv:
      case LayerKind::kMultiDilationConv: {
        const Shape x = in(0);
        ConvSpec spec = l.conv;
        spec.dilation = l.max_dilation();
        const int oh = spec.out_extent(x.h);
        const int ow = spec.out_extent(x.w);
        if (oh < 1 || ow < 1) {
          throw ShapeError(l.name + ": output would be empty for " + x.str());
        }
        s = Shape{x.n, l.conv.out_channels, oh, ow};
        break;
      }
      case LayerKind::kAvgPool2x2: {
        const Shape x = in(0);
        s = Shape{x.n, x.c, (x.h + 1) / 2, (x.w + 1) / 2};
        break;
      }
      case LayerKind::kAdd: {
        const Shape a = in(0);
        const Shape b = in(1);
        if (a != b) {
          throw ShapeError(l.name + ": add of " + a.str() + " and " + b.str());
        }
        s = a;
        break;
      }
      case LayerKind::kConcat: {
        s = in(0);
        s.c = 0;
        for (int id : l.inputs) {
          const Shape p = shapes[id];
          if (p.n != s.n || p.h != s.h || p.w != s.w) {
            throw ShapeError(l.name + ": concat spatial mismatch " + p.str());
          }
          s.c += p.c;
        }
        break;
      }
      case LayerKind::kUpsample: {
        s = in(0);
        if (l.resize_like >= 0) {
          s.h = shapes[l.resize_like].h;
          s.w = shapes[l.resize_like].w;
        } else {
          s.h *= l.factor;
          s.w *= l.factor;
        }
        break;
      }
      default:
        s = in(0);
        break;
    }
    if (s.c != l.channels) {
      throw ShapeError(l.name + ": inferred " + std::to_string(s.c) +
                       " channels, declared " + std::to_string(l.channels));
    }
    shapes[i] = s;
  }
  return shapes;
}

GraphBuilder::GraphBuilder(int input_channels) {
  if (input_channels < 1) throw SpecError("input channels must be >= 1");
  Layer in;
  in.kind = LayerKind::kInput;
  in.name = "input";
  in.channels = input_channels;
  layers_.push_back(std::move(in));
}

void GraphBuilder::check_id(int id) const {
  if (id < 0 || id >= static_cast<int>(layers_.size())) {
    throw SpecError("unknown layer id " + std::to_string(id));
  }
}

int GraphBuilder::push(Layer layer) {
  for (int id : layer.inputs) check_id(id);
  layers_.push_back(std::move(layer));
  return static_cast<int>(layers_.size()) - 1;
}

int GraphBuilder::conv(int x, const std::string& name, const ConvSpec& spec) {
  check_id(x);
  spec.validate();
  if (channels(x) != spec.in_channels) {
    throw SpecError(name + ": input has " + std::to_string(channels(x)) +
                    " channels, conv expects " +
                    std::to_string(spec.in_channels));
  }
  Layer l;
  l.kind = LayerKind::kConv;
  l.name = name;
  l.inputs = {x};
  l.channels = spec.out_channels;
  l.conv = spec;
  l.params.push_back({name + ".w", spec.weight_shape(), true});
  if (spec.bias) l.params.push_back({name + ".b", Shape{1, spec.out_channels, 1, 1}, true});
  return push(std::move(l));
}

int GraphBuilder::multi_dilation_conv(int x, const std::string& name,
                                      const ConvSpec& spec,
                                      const std::vector<int>& dilations) {
  check_id(x);
  spec.validate();
  if (spec.bias) throw SpecError(name + ": multi-dilation conv has no bias");
  if (dilations.empty()) throw SpecError(name + ": no dilation branches");
  for (int d : dilations) {
    if (d < 1) throw SpecError(name + ": dilation must be >= 1");
  }
  if (channels(x) != spec.in_channels) {
    throw SpecError(name + ": input has " + std::to_string(channels(x)) +
                    " channels, conv expects " +
                    std::to_string(spec.in_channels));
  }
  const int branches = static_cast<int>(dilations.size());
  Layer l;
  l.kind = LayerKind::kMultiDilationConv;
  l.name = name;
  l.inputs = {x};
  l.channels = spec.out_channels;
  l.conv = spec;
  l.conv.dilation = 1;
  l.dilations = dilations;
  for (int j = 0; j < branches; ++j) {
    const ConvSpec bs = branch_spec(spec, branches, dilations[j]);
    l.params.push_back({name + ".branch" + std::to_string(j) + ".w",
                        bs.weight_shape(), true});
  }
  return push(std::move(l));
}

int GraphBuilder::batchnorm(int x, const std::string& name) {
  check_id(x);
  const int c = channels(x);
  Layer l;
  l.kind = LayerKind::kBatchNorm;
  l.name = name;
  l.inputs = {x};
  l.channels = c;
  const Shape v{1, c, 1, 1};
  l.params = {{name + ".gamma", v, true},
              {name + ".beta", v, true},
              {name + ".mean", v, false},
              {name + ".var", v, false},
              {name + ".eps", Shape{1, 1, 1, 1}, false}};
  return push(std::move(l));
}

int GraphBuilder::relu(int x, const std::string& name) {
  check_id(x);
  Layer l;
  l.kind = LayerKind::kRelu;
  l.name = name;
  l.inputs = {x};
  l.channels = channels(x);
  return push(std::move(l));
}

int GraphBuilder::squeeze_excite(int x, const std::string& name, int reduced) {
  check_id(x);
  if (reduced < 1) throw SpecError(name + ": SE width must be >= 1");
  const int c = channels(x);
  Layer l;
  l.kind = LayerKind::kSqueezeExcite;
  l.name = name;
  l.inputs = {x};
  l.channels = c;
  l.se_channels = reduced;
  l.params = {{name + ".fc1.w", Shape{reduced, c, 1, 1}, true},
              {name + ".fc1.b", Shape{1, reduced, 1, 1}, true},
              {name + ".fc2.w", Shape{c, reduced, 1, 1}, true},
              {name + ".fc2.b", Shape{1, c, 1, 1}, true}};
  return push(std::move(l));
}

int GraphBuilder::avgpool2x2(int x, const std::string& name) {
  check_id(x);
  Layer l;
  l.kind = LayerKind::kAvgPool2x2;
  l.name = name;
  l.inputs = {x};
  l.channels = channels(x);
  return push(std::move(l));
}

int GraphBuilder::add(int a, int b, const std::string& name) {
  check_id(a);
  check_id(b);
  if (channels(a) != channels(b)) {
    throw SpecError(name + ": add of " + std::to_string(channels(a)) +
                    " and " + std::to_string(channels(b)) + " channels");
  }
  Layer l;
  l.kind = LayerKind::kAdd;
  l.name = name;
  l.inputs = {a, b};
  l.channels = channels(a);
  return push(std::move(l));
}

int GraphBuilder::concat(const std::vector<int>& parts, const std::string& name) {
  if (parts.empty()) throw SpecError(name + ": concat of nothing");
  Layer l;
  l.kind = LayerKind::kConcat;
  l.name = name;
  l.inputs = parts;
  for (int p : parts) {
    check_id(p);
    l.channels += channels(p);
  }
  return push(std::move(l));
}

int GraphBuilder::upsample_like(int x, int reference, const std::string& name) {
  check_id(x);
  check_id(reference);
  Layer l;
  l.kind = LayerKind::kUpsample;
  l.name = name;
  l.inputs = {x};
  l.channels = channels(x);
  l.resize_like = reference;
  return push(std::move(l));
}

int GraphBuilder::upsample(int x, int factor, const std::string& name) {
  check_id(x);
  if (factor != 2 && factor != 4) {
    throw SpecError(name + ": upsample factor must be 2 or 4");
  }
  Layer l;
  l.kind = LayerKind::kUpsample;
  l.name = name;
  l.inputs = {x};
  l.channels = channels(x);
  l.factor = factor;
  return push(std::move(l));
}

int GraphBuilder::identity(int x, const std::string& name) {
  check_id(x);
  Layer l;
  l.kind = LayerKind::kIdentity;
  l.name = name;
  l.inputs = {x};
  l.channels = channels(x);
  return push(std::move(l));
}

void GraphBuilder::mark_output(const std::string& name, int id) {
  check_id(id);
  outputs_[name] = id;
}

ModelGraph GraphBuilder::build() && {
  std::set<std::string> seen;
  for (const Layer& l : layers_) {
    for (const ParamSlot& p : l.params) {
      if (!seen.insert(p.name).second) {
        throw SpecError("duplicate parameter slot '" + p.name + "'");
      }
    }
  }
  ModelGraph g;
  g.layers_ = std::move(layers_);
  g.outputs_ = std::move(outputs_);
  return g;
}

}  // namespace regseg
