#include "regseg/metrics.hpp"

#include <limits>
#include <numeric>

#include "regseg/errors.hpp"

namespace regseg {

ClassMap argmax_classes(const Tensor& logits) {
  const Shape s = logits.shape();
  if (s.n != 1) throw ShapeError("argmax expects batch 1, got " + s.str());
  if (s.c > 256) throw ShapeError("argmax supports at most 256 classes");
  ClassMap out(s.h, s.w);
  std::vector<float> best(logits.plane(0, 0), logits.plane(0, 0) + s.plane());
  for (int c = 1; c < s.c; ++c) {
    const float* p = logits.plane(0, c);
    for (std::size_t i = 0; i < s.plane(); ++i) {
      if (p[i] > best[i]) {
        best[i] = p[i];
        out.data[i] = static_cast<std::uint8_t>(c);
      }
    }
  }
  return out;
}

std::int64_t count_params(const ModelGraph& graph) {
  std::int64_t total = 0;
  for (const ParamSlot& slot : graph.param_slots()) {
    if (slot.learnable) total += static_cast<std::int64_t>(slot.shape.numel());
  }
  return total;
}

MacCount count_macs(const ModelGraph& graph, int height, int width) {
  MacCount m;
  if (graph.size() <= 1) return m;
  const auto shapes =
      graph.infer_shapes(Shape{1, graph.input_channels(), height, width});
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const Layer& l = graph.layer(static_cast<int>(i));
    const Shape& o = shapes[i];
    if (l.kind == LayerKind::kConv || l.kind == LayerKind::kMultiDilationConv) {
      m.macs += static_cast<std::int64_t>(o.h) * o.w * o.c *
                (l.conv.in_channels / l.conv.groups) * l.conv.kernel * l.conv.kernel;
    } else if (l.kind == LayerKind::kSqueezeExcite) {
      m.macs += 2LL * l.channels * l.se_channels;
    }
  }
  return m;
}

ConfusionMatrix::ConfusionMatrix(int classes, int ignore_label)
    : classes_(classes), ignore_label_(ignore_label) {
  if (classes < 1 || classes > 256) {
    throw ValueError("class count must be in [1, 256], got " + std::to_string(classes));
  }
  if (ignore_label >= 0 && ignore_label < classes) {
    throw ValueError("ignore label collides with a class id");
  }
  counts_.assign(static_cast<std::size_t>(classes) * classes, 0);
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

void ConfusionMatrix::accumulate(const ClassMap& prediction, const ClassMap& label) {
  if (prediction.height != label.height || prediction.width != label.width) {
    throw ShapeError("prediction " + std::to_string(prediction.height) + "x" +
                     std::to_string(prediction.width) + " vs label " +
                     std::to_string(label.height) + "x" + std::to_string(label.width));
  }
  for (std::size_t i = 0; i < label.data.size(); ++i) {
    const int p = prediction.data[i];
    const int t = label.data[i];
    if (p >= classes_) {
      throw ValueError("predicted class " + std::to_string(p) + " out of range");
    }
    if (t == ignore_label_) continue;
    if (t >= classes_) {
      throw ValueError("label class " + std::to_string(t) + " out of range");
    }
  }
  for (std::size_t i = 0; i < label.data.size(); ++i) {
    const int t = label.data[i];
    if (t == ignore_label_) continue;
    ++counts_[static_cast<std::size_t>(t) * classes_ + prediction.data[i]];
  }
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) throw ShapeError("confusion matrix class mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

IouResult compute_iou(const ConfusionMatrix& cm, const std::set<int>& excluded) {
  const int n = cm.classes();
  IouResult r;
  r.per_class.resize(n);
  double sum = 0.0;
  double sum_reduced = 0.0;
  for (int c = 0; c < n; ++c) {
    std::uint64_t row = 0;
    std::uint64_t col = 0;
    for (int j = 0; j < n; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const std::uint64_t diag = cm.at(c, c);
    const std::uint64_t uni = row + col - diag;
    if (uni == 0) continue;
    const double iou = static_cast<double>(diag) / static_cast<double>(uni);
    r.per_class[c] = iou;
    sum += iou;
    ++r.counted;
    if (!excluded.count(c)) {
      sum_reduced += iou;
      ++r.counted_reduced;
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.miou = r.counted ? sum / r.counted : nan;
  r.miou_reduced = r.counted_reduced ? sum_reduced / r.counted_reduced : nan;
  return r;
}

}  // namespace regseg
