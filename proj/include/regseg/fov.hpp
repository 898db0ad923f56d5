#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "regseg/executor.hpp"
#include "regseg/graph.hpp"

namespace regseg {

// Running (kernel, stride) of a composition of convs. A fresh state is the
// identity (k = 1, s = 1).
struct FovState {
  std::int64_t k = 1;
  std::int64_t s = 1;
  friend bool operator==(const FovState&, const FovState&) = default;
};

// Extent of a k x k kernel at dilation r: r * (k - 1) + 1.
std::int64_t effective_kernel(int kernel, int dilation);

// Composes a k' x k' conv with stride s' onto `state`:
//   k <- k + (k' - 1) * s,   s <- s * s'
FovState fov_compose(FovState state, std::int64_t kernel, std::int64_t stride);

struct FovRow {
  int layer_id = -1;
  std::string layer;
  std::int64_t kernel = 1;  // effective k'
  std::int64_t stride = 1;  // s'
  int dilation = 1;         // largest branch dilation
  FovState before;
  FovState after;
  bool hole_free = true;    // dilation <= before.k / before.s
};

struct FovReport {
  std::vector<FovRow> rows;  // spatial layers along the main path
  FovState final_state;
  int output_id = -1;

  std::int64_t field_of_view() const { return final_state.k; }
};

// Folds fov_compose along the backbone up to output "backbone" (or the
// primary output when absent). Convs contribute their effective kernel; a
// multi-dilation conv counts once at its largest dilation; SE, batch norm
// and activations are transparent; at a sum or concat the larger field wins,
// which discards the shortcut branch.
FovReport analyze_graph_fov(const ModelGraph& graph);

struct HoleViolation {
  int layer_id = -1;
  std::string layer;
  FovState before;
  int dilation = 1;
};

// Dilated convs with r > k / s, evaluated on the state feeding each conv.
std::vector<HoleViolation> check_hole_free(const ModelGraph& graph);

// Copy of the graph up to the analysed output, with every conv at all-ones
// weights and zero bias, batch norm / SE / ReLU replaced by identity, and
// channel counts reduced to the minimum that keeps the branch structure
// (all channels of one branch carry identical values anyway). Pooling and
// upsampling are kept.
struct LinearizedTwin {
  ModelGraph graph;
  WeightMap weights;
};
LinearizedTwin make_linearized_twin(const ModelGraph& graph);

struct AxisExtent {
  int lo = -1;  // first input index with nonzero influence, -1 when none
  int hi = -1;
  std::vector<int> interior_zeros;  // positions in (lo, hi) without influence
  bool clipped = false;             // support touches the image border

  int extent() const { return lo < 0 ? 0 : hi - lo + 1; }
};

struct EmpiricalFov {
  AxisExtent rows;  // sweep down the column through the output position
  AxisExtent cols;  // sweep along the row through the output position
  int stride = 1;   // input size / output size at the analysed layer
};

// Feeds one-hot impulses to the linearized twin along the input row and
// column that map onto output element (out_y, out_x) and records where
// that element becomes nonzero.
EmpiricalFov measure_empirical_fov(const ModelGraph& graph, int out_y, int out_x,
                                   int in_h, int in_w);

// Per-layer text table followed by the field-of-view summary. `image_h`,
// `image_w` size the footer lines about the field needed to cover an image.
std::string format_fov_report(const FovReport& report,
                              const std::vector<HoleViolation>& violations,
                              int image_h, int image_w);

}  // namespace regseg
