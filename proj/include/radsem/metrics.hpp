#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "radsem/types.hpp"

namespace radsem {

struct UndefinedMetricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Exact nearest-neighbour index: median-split KD-tree over 3D points.
// Immutable after construction; queries are parallel-safe.
class NnIndex {
 public:
  explicit NnIndex(std::span<const Eigen::Vector3f> points) {
    points_.assign(points.begin(), points.end());
    for (const auto& p : points_)
      if (!p.allFinite()) throw std::invalid_argument("nn index: non-finite point");
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    if (!points_.empty()) root_ = build(0, points_.size());
  }

  bool empty() const { return points_.empty(); }
  std::size_t size() const { return points_.size(); }

  // Squared distance to the nearest indexed point; infinity when empty.
  double nearest_dist2(const Eigen::Vector3f& q) const {
    if (points_.empty()) return std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    search(root_, q, best);
    return best;
  }

  double nearest_dist(const Eigen::Vector3f& q) const { return std::sqrt(nearest_dist2(q)); }

 private:
  struct Node {
    int left = -1, right = -1;
    uint32_t begin = 0, end = 0;  // leaf payload range in order_
    float split = 0.0f;
    int axis = -1;  // -1 marks a leaf
  };

  static constexpr std::size_t kLeafSize = 16;

  int build(std::size_t begin, std::size_t end) {
    Node node;
    node.begin = static_cast<uint32_t>(begin);
    node.end = static_cast<uint32_t>(end);
    if (end - begin > kLeafSize) {
      Eigen::Vector3f lo = points_[order_[begin]], hi = lo;
      for (std::size_t i = begin + 1; i < end; ++i) {
        lo = lo.cwiseMin(points_[order_[i]]);
        hi = hi.cwiseMax(points_[order_[i]]);
      }
      int axis = 0;
      (hi - lo).maxCoeff(&axis);
      const std::size_t mid = (begin + end) / 2;
      std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                       [&](uint32_t a, uint32_t b) { return points_[a][axis] < points_[b][axis]; });
      node.axis = axis;
      node.split = points_[order_[mid]][axis];
      const int self = static_cast<int>(nodes_.size());
      nodes_.push_back(node);
      const int left = build(begin, mid);
      const int right = build(mid, end);
      nodes_[self].left = left;
      nodes_[self].right = right;
      return self;
    }
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    return self;
  }

  void search(int id, const Eigen::Vector3f& q, double& best) const {
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (uint32_t i = node.begin; i < node.end; ++i) {
        const double d2 = (points_[order_[i]] - q).cast<double>().squaredNorm();
        best = std::min(best, d2);
      }
      return;
    }
    const double delta = double(q[node.axis]) - double(node.split);
    const int near = delta < 0.0 ? node.left : node.right;
    const int far = delta < 0.0 ? node.right : node.left;
    search(near, q, best);
    if (delta * delta < best) search(far, q, best);
  }

  std::vector<Eigen::Vector3f> points_;
  std::vector<uint32_t> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

// Threshold-matched counts: tp/fp partition the prediction by
// nearest-ground-truth distance, fn counts ground-truth points farther than
// tau from every prediction.
struct MatchCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double tau = 0.0;
};

inline MatchCounts match_counts(std::span<const Eigen::Vector3f> predicted,
                                std::span<const Eigen::Vector3f> ground_truth, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("match_counts: tau must be positive");
  MatchCounts counts;
  counts.tau = tau;
  const double tau2 = tau * tau;

  const NnIndex gt_index(ground_truth);
  for (const auto& p : predicted)
    (gt_index.nearest_dist2(p) <= tau2 ? counts.tp : counts.fp)++;

  const NnIndex pred_index(predicted);
  for (const auto& q : ground_truth)
    if (!(pred_index.nearest_dist2(q) <= tau2)) ++counts.fn;
  return counts;
}

// Chamfer distance with the asymmetric normalizations
//   D1 = sum of prediction->gt nearest distances / (TP + FP)
//   D2 = sum of gt->prediction nearest distances / (TP + FN)
// and CD = (D1 + D2) / 2. Note D2's denominator mixes a prediction-side
// count with a ground-truth sum; implemented as defined. Undefined for
// empty clouds.
inline double chamfer(std::span<const Eigen::Vector3f> predicted,
                      std::span<const Eigen::Vector3f> ground_truth, double tau) {
  if (predicted.empty() || ground_truth.empty())
    throw UndefinedMetricError("chamfer: undefined for empty clouds");
  const MatchCounts counts = match_counts(predicted, ground_truth, tau);

  const NnIndex gt_index(ground_truth);
  double sum_pred = 0.0;
  for (const auto& p : predicted) sum_pred += gt_index.nearest_dist(p);

  const NnIndex pred_index(predicted);
  double sum_gt = 0.0;
  for (const auto& q : ground_truth) sum_gt += pred_index.nearest_dist(q);

  const double d1 = sum_pred / double(counts.tp + counts.fp);
  const double d2 = sum_gt / double(counts.tp + counts.fn);
  return 0.5 * (d1 + d2);
}

// Ratios from the counts; a zero denominator is reported as absent rather
// than zero.
struct PrfIou {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> iou;
};

inline PrfIou prf_iou(const MatchCounts& c) {
  PrfIou out;
  if (c.tp + c.fp > 0) out.precision = double(c.tp) / double(c.tp + c.fp);
  if (c.tp + c.fn > 0) out.recall = double(c.tp) / double(c.tp + c.fn);
  if (c.tp + c.fp + c.fn > 0) out.iou = double(c.tp) / double(c.tp + c.fp + c.fn);
  return out;
}

// Per-class IoU via class-restricted matching; free is never evaluated and
// classes absent from both clouds are skipped from the mean.
struct MiouResult {
  std::map<ClassLabel, double> per_class;
  std::optional<double> mean;
};

inline MiouResult miou(const SemanticPointCloud& predicted, const SemanticPointCloud& ground_truth,
                       double tau,
                       std::span<const ClassLabel> classes = std::span<const ClassLabel>{}) {
  static const std::vector<ClassLabel> kDefault{ClassLabel::kGround, ClassLabel::kTree,
                                                ClassLabel::kPole, ClassLabel::kWire};
  const std::span<const ClassLabel> evaluated = classes.empty() ? std::span(kDefault) : classes;

  MiouResult result;
  double total = 0.0;
  std::size_t counted = 0;
  for (ClassLabel cls : evaluated) {
    if (cls == ClassLabel::kFree) throw std::invalid_argument("miou: free class is not evaluated");
    std::vector<Eigen::Vector3f> pred, gt;
    for (std::size_t i = 0; i < predicted.size(); ++i)
      if (predicted.labels[i] == cls) pred.push_back(predicted.points[i]);
    for (std::size_t i = 0; i < ground_truth.size(); ++i)
      if (ground_truth.labels[i] == cls) gt.push_back(ground_truth.points[i]);
    if (pred.empty() && gt.empty()) continue;

    const MatchCounts c = match_counts(pred, gt, tau);
    const double iou =
        c.tp + c.fp + c.fn > 0 ? double(c.tp) / double(c.tp + c.fp + c.fn) : 0.0;
    result.per_class[cls] = iou;
    total += iou;
    ++counted;
  }
  if (counted > 0) result.mean = total / double(counted);
  return result;
}

// O(n^2) references used by the tests and the bench.
namespace brute {

inline double nearest_dist(std::span<const Eigen::Vector3f> points, const Eigen::Vector3f& q) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : points) best = std::min(best, (p - q).cast<double>().squaredNorm());
  return std::sqrt(best);
}

inline MatchCounts match_counts(std::span<const Eigen::Vector3f> predicted,
                                std::span<const Eigen::Vector3f> ground_truth, double tau) {
  MatchCounts c;
  c.tau = tau;
  for (const auto& p : predicted)
    (nearest_dist(ground_truth, p) <= tau ? c.tp : c.fp)++;
  for (const auto& q : ground_truth)
    if (!(nearest_dist(predicted, q) <= tau)) ++c.fn;
  return c;
}

inline double chamfer(std::span<const Eigen::Vector3f> predicted,
                      std::span<const Eigen::Vector3f> ground_truth, double tau) {
  if (predicted.empty() || ground_truth.empty())
    throw UndefinedMetricError("chamfer: undefined for empty clouds");
  const MatchCounts c = match_counts(predicted, ground_truth, tau);
  double sum_pred = 0.0, sum_gt = 0.0;
  for (const auto& p : predicted) sum_pred += nearest_dist(ground_truth, p);
  for (const auto& q : ground_truth) sum_gt += nearest_dist(predicted, q);
  return 0.5 * (sum_pred / double(c.tp + c.fp) + sum_gt / double(c.tp + c.fn));
}

}  // namespace brute

}  // namespace radsem
