#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "regseg/graph.hpp"
#include "regseg/tensor.hpp"

namespace regseg {

// Per-pixel class ids, row-major.
struct ClassMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  ClassMap() = default;
  ClassMap(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const ClassMap&, const ClassMap&) = default;
};

// Per-pixel argmax over channels of an (1, C, H, W) logit tensor. Ties go to
// the lowest class index.
ClassMap argmax_classes(const Tensor& logits);

// Learnable parameters: conv weights and biases, BN gamma/beta, SE
// matrices and biases. BN running statistics are not counted.
std::int64_t count_params(const ModelGraph& graph);

struct MacCount {
  std::int64_t macs = 0;
  std::int64_t flops() const { return 2 * macs; }
};

// Multiply-accumulates for one image of the given size: every conv
// contributes H_out * W_out * C_out * (C_in / groups) * k^2, every SE block
// its two matrix products. Normalisation, activations, pooling and
// resampling are not counted.
MacCount count_macs(const ModelGraph& graph, int height, int width);

inline constexpr int kIgnoreLabel = 255;

// Cityscapes train ids of truck, bus and train.
inline const std::set<int> kReducedExcludedClasses{14, 15, 16};

// Rows are ground truth, columns prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes, int ignore_label = kIgnoreLabel);

  int classes() const { return classes_; }
  int ignore_label() const { return ignore_label_; }
  std::uint64_t at(int truth, int predicted) const {
    return counts_[static_cast<std::size_t>(truth) * classes_ + predicted];
  }
  std::uint64_t total() const;

  // Throws ShapeError on size mismatch and ValueError on out-of-range ids.
  // Pixels whose label is the ignore label are skipped.
  void accumulate(const ClassMap& prediction, const ClassMap& label);

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  int classes_;
  int ignore_label_;
  std::vector<std::uint64_t> counts_;
};

struct IouResult {
  // IOU per class; empty when the class never occurs in labels or
  // predictions (zero union). Such classes are left out of both means.
  std::vector<std::optional<double>> per_class;
  double miou = 0.0;          // mean over classes with a defined IOU
  double miou_reduced = 0.0;  // same, additionally skipping `excluded`
  int counted = 0;
  int counted_reduced = 0;
};

IouResult compute_iou(const ConfusionMatrix& cm,
                      const std::set<int>& excluded = kReducedExcludedClasses);

}  // namespace regseg
