#include "regseg/fov.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "regseg/errors.hpp"

namespace regseg {

std::int64_t effective_kernel(int kernel, int dilation) {
  return static_cast<std::int64_t>(dilation) * (kernel - 1) + 1;
}

FovState fov_compose(FovState state, std::int64_t kernel, std::int64_t stride) {
  return FovState{state.k + (kernel - 1) * state.s, state.s * stride};
}

namespace {

int analysed_output(const ModelGraph& graph) {
  return graph.has_output("backbone") ? graph.output("backbone")
                                      : graph.primary_output();
}

struct Propagation {
  std::vector<FovState> state;
  std::vector<int> main_input;  // predecessor on the widest path, -1 at input
};

// Kernel and stride a layer adds on its own, (1, 1) when transparent.
std::pair<std::int64_t, std::int64_t> layer_step(const Layer& l) {
  switch (l.kind) {
    case LayerKind::kConv:
    case LayerKind::kMultiDilationConv:
      return {effective_kernel(l.conv.kernel, l.max_dilation()), l.conv.stride};
    case LayerKind::kAvgPool2x2:
      return {2, 2};
    default:
      return {1, 1};
  }
}

Propagation propagate(const ModelGraph& graph, int output) {
  Propagation p;
  p.state.assign(graph.size(), FovState{});
  p.main_input.assign(graph.size(), -1);
  for (int id : graph.ancestors(output)) {
    const Layer& l = graph.layer(id);
    if (l.kind == LayerKind::kInput) continue;
    int best = l.inputs.front();
    for (int in : l.inputs) {
      if (p.state[in].k > p.state[best].k) best = in;
    }
    p.main_input[id] = best;
    const auto [k, s] = layer_step(l);
    p.state[id] = fov_compose(p.state[best], k, s);
  }
  return p;
}

bool hole_free(const FovState& before, int dilation) {
  // r <= k / s without rounding
  return static_cast<std::int64_t>(dilation) * before.s <= before.k;
}

}  // namespace

FovReport analyze_graph_fov(const ModelGraph& graph) {
  const int output = analysed_output(graph);
  const Propagation p = propagate(graph, output);
  FovReport report;
  report.output_id = output;
  report.final_state = p.state[output];
  for (int id = output; id >= 0 && p.main_input[id] >= 0; id = p.main_input[id]) {
    const Layer& l = graph.layer(id);
    const auto [k, s] = layer_step(l);
    if (k == 1 && s == 1) continue;
    FovRow row;
    row.layer_id = id;
    row.layer = l.name;
    row.kernel = k;
    row.stride = s;
    row.dilation = l.max_dilation();
    row.before = p.state[p.main_input[id]];
    row.after = p.state[id];
    row.hole_free = hole_free(row.before, row.dilation);
    report.rows.push_back(row);
  }
  std::reverse(report.rows.begin(), report.rows.end());
  return report;
}

std::vector<HoleViolation> check_hole_free(const ModelGraph& graph) {
  const int output = analysed_output(graph);
  const Propagation p = propagate(graph, output);
  std::vector<HoleViolation> out;
  for (int id : graph.ancestors(output)) {
    const Layer& l = graph.layer(id);
    if (l.kind != LayerKind::kConv && l.kind != LayerKind::kMultiDilationConv) continue;
    const int r = l.max_dilation();
    if (r <= 1) continue;
    const FovState before = p.state[l.inputs.front()];
    if (!hole_free(before, r)) out.push_back({id, l.name, before, r});
  }
  return out;
}

LinearizedTwin make_linearized_twin(const ModelGraph& graph) {
  const int output = analysed_output(graph);
  const std::vector<int> keep = graph.ancestors(output);

  int width = 1;
  for (int id : keep) {
    const Layer& l = graph.layer(id);
    if (l.kind == LayerKind::kMultiDilationConv) {
      width = std::lcm(width, static_cast<int>(l.dilations.size()));
    }
  }

  GraphBuilder b(1);
  std::vector<int> map(graph.size(), -1);
  map[0] = b.input();
  for (int id : keep) {
    const Layer& l = graph.layer(id);
    if (l.kind == LayerKind::kInput) continue;
    const int x = map[l.inputs.front()];
    switch (l.kind) {
      case LayerKind::kConv: {
        ConvSpec s = l.conv;
        s.in_channels = b.channels(x);
        s.out_channels = width;
        s.groups = 1;
        s.bias = false;
        map[id] = b.conv(x, l.name, s);
        break;
      }
      case LayerKind::kMultiDilationConv: {
        if (b.channels(x) != width) {
          throw SpecError(l.name + ": twin cannot split a " +
                          std::to_string(b.channels(x)) + "-channel input");
        }
        ConvSpec s = l.conv;
        s.in_channels = width;
        s.out_channels = width;
        s.groups = static_cast<int>(l.dilations.size());
        map[id] = b.multi_dilation_conv(x, l.name, s, l.dilations);
        break;
      }
      case LayerKind::kAvgPool2x2:
        map[id] = b.avgpool2x2(x, l.name);
        break;
      case LayerKind::kAdd:
        map[id] = b.add(x, map[l.inputs[1]], l.name);
        break;
      case LayerKind::kConcat: {
        std::vector<int> parts;
        for (int in : l.inputs) parts.push_back(map[in]);
        map[id] = b.concat(parts, l.name);
        break;
      }
      case LayerKind::kUpsample:
        map[id] = l.resize_like >= 0 ? b.upsample_like(x, map[l.resize_like], l.name)
                                     : b.upsample(x, l.factor, l.name);
        break;
      default:  // batch norm, relu, SE, identity
        map[id] = b.identity(x, l.name);
        break;
    }
  }
  b.mark_output("backbone", map[output]);
  LinearizedTwin twin{std::move(b).build(), {}};
  for (const ParamSlot& slot : twin.graph.param_slots()) {
    twin.weights.emplace(slot.name, Tensor(slot.shape, 1.0f));
  }
  return twin;
}

EmpiricalFov measure_empirical_fov(const ModelGraph& graph, int out_y, int out_x,
                                   int in_h, int in_w) {
  LinearizedTwin twin = make_linearized_twin(graph);
  const Shape input_shape{1, 1, in_h, in_w};
  const auto shapes = twin.graph.infer_shapes(input_shape);
  const Shape out_shape = shapes[twin.graph.output("backbone")];
  if (out_y < 0 || out_y >= out_shape.h || out_x < 0 || out_x >= out_shape.w) {
    throw IndexError("output position outside the " + std::to_string(out_shape.h) +
                     "x" + std::to_string(out_shape.w) + " feature map");
  }
  const Executor exec(std::move(twin.graph), twin.weights);

  EmpiricalFov result;
  result.stride = in_h / out_shape.h;
  const int stride_x = in_w / out_shape.w;
  const int centre_y = std::min(out_y * result.stride, in_h - 1);
  const int centre_x = std::min(out_x * stride_x, in_w - 1);

  auto influences = [&](int y, int x) {
    Tensor impulse(input_shape, 0.0f);
    impulse.at(0, 0, y, x) = 1.0f;
    const Tensor out = exec.run(impulse);
    for (int c = 0; c < out.shape().c; ++c) {
      if (out.at(0, c, out_y, out_x) != 0.0f) return true;
    }
    return false;
  };

  auto sweep = [&](int length, auto&& probe) {
    std::vector<bool> hit(length);
    for (int i = 0; i < length; ++i) hit[i] = probe(i);
    AxisExtent e;
    for (int i = 0; i < length; ++i) {
      if (!hit[i]) continue;
      if (e.lo < 0) e.lo = i;
      e.hi = i;
    }
    if (e.lo >= 0) {
      for (int i = e.lo + 1; i < e.hi; ++i) {
        if (!hit[i]) e.interior_zeros.push_back(i);
      }
      e.clipped = e.lo == 0 || e.hi == length - 1;
    }
    return e;
  };

  result.cols = sweep(in_w, [&](int x) { return influences(centre_y, x); });
  result.rows = sweep(in_h, [&](int y) { return influences(y, centre_x); });
  return result;
}

std::string format_fov_report(const FovReport& report,
                              const std::vector<HoleViolation>& violations,
                              int image_h, int image_w) {
  std::ostringstream o;
  o << std::left << std::setw(28) << "layer" << std::right << std::setw(5) << "k'"
    << std::setw(4) << "s'" << std::setw(8) << "k" << std::setw(5) << "s"
    << std::setw(5) << "r" << "  hole-free\n";
  for (const FovRow& r : report.rows) {
    o << std::left << std::setw(28) << r.layer << std::right << std::setw(5)
      << r.kernel << std::setw(4) << r.stride << std::setw(8) << r.after.k
      << std::setw(5) << r.after.s << std::setw(5) << r.dilation << "  "
      << (r.hole_free ? "yes" : "NO") << "\n";
  }
  o << "field-of-view: " << report.field_of_view()
    << " (output stride " << report.final_state.s << ")\n";
  o << "hole-free: " << (violations.empty() ? "yes" : "no");
  for (const HoleViolation& v : violations) {
    o << "\n  " << v.layer << ": r=" << v.dilation << " > k/s=" << v.before.k << "/"
      << v.before.s;
  }
  o << "\n";
  if (image_h > 0 && image_w > 0) {
    o << "field needed for the top-left output to reach the bottom-left input: "
      << 2 * image_h - 1 << "; the bottom-right input: "
      << 2 * std::max(image_h, image_w) - 1 << "\n";
  }
  return o.str();
}

}  // namespace regseg
