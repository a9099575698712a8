#pragma once

// Mask and total losses, mask IoU, and COCO-style average precision with
// precision-recall curves.

#include <map>
#include <numeric>
#include <vector>

#include "rfmask/common.hpp"
#include "rfmask/detect.hpp"
#include "rfmask/mask.hpp"

namespace rfmask {

// K class channels of m x m probabilities for one predicted box.
struct BoxMaskPrediction {
  std::vector<MaskGrid> class_masks;
};

struct MaskTarget {
  std::size_t class_id = 1;
  MaskGrid mask;  // binary ground truth, m x m
};

namespace detail {

inline void check_mask_inputs(const std::vector<BoxMaskPrediction>& preds, const std::vector<MaskTarget>& gts) {
  if (preds.empty()) throw std::invalid_argument("mask_loss: no boxes");
  if (preds.size() != gts.size()) throw std::invalid_argument("mask_loss: prediction/target count mismatch");
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (gts[i].class_id >= preds[i].class_masks.size())
      throw std::invalid_argument("mask_loss: ground-truth class has no predicted channel");
    const MaskGrid& p = preds[i].class_masks[gts[i].class_id];
    if (!p.same_shape(gts[i].mask) || p.size() == 0) throw std::invalid_argument("mask_loss: shape mismatch");
    for (double v : p.values()) require(v >= 0 && v <= 1, "mask_loss: probability outside [0, 1]");
  }
}

}  // namespace detail

// (1 / N_box) sum_i mean-over-pixels BCE(m_{i, k_i}, m*_{k_i}); only the
// ground-truth class channel of each box contributes.
inline double mask_loss(const std::vector<BoxMaskPrediction>& preds, const std::vector<MaskTarget>& gts) {
  detail::check_mask_inputs(preds, gts);
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const MaskGrid& p = preds[i].class_masks[gts[i].class_id];
    double sum = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) sum += binary_cross_entropy(p.values()[j], gts[i].mask.values()[j]);
    total += sum / static_cast<double>(p.size());
  }
  return total / static_cast<double>(preds.size());
}

// dL_mask / d m_{i, k_i}; other channels have zero gradient.
inline std::vector<MaskGrid> mask_loss_grad(const std::vector<BoxMaskPrediction>& preds,
                                            const std::vector<MaskTarget>& gts) {
  detail::check_mask_inputs(preds, gts);
  std::vector<MaskGrid> grads;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const MaskGrid& p = preds[i].class_masks[gts[i].class_id];
    MaskGrid g(p.width(), p.height());
    const double scale = 1.0 / (static_cast<double>(p.size()) * static_cast<double>(preds.size()));
    for (std::size_t j = 0; j < p.size(); ++j)
      g.values()[j] = scale * binary_cross_entropy_grad(p.values()[j], gts[i].mask.values()[j]);
    grads.push_back(std::move(g));
  }
  return grads;
}

inline double total_loss(double detect_loss, double mask_loss_value) {
  require(std::isfinite(detect_loss) && std::isfinite(mask_loss_value), "total_loss: non-finite input");
  return detect_loss + mask_loss_value;
}

// |a & b| / |a | b|; two empty masks count as a perfect match.
template <typename T>
double mask_iou(const Grid2<T>& a, const Grid2<T>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mask_iou: shape mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a.values()[i] != T{}, y = b.values()[i] != T{};
    inter += (x && y);
    uni += (x || y);
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct ScoredBox {
  Box2D box;
  double score = 0.0;
};

struct FrameEval {
  std::vector<ScoredBox> detections;
  std::vector<Box2D> ground_truth;
};

using EvalRecord = std::vector<FrameEval>;

struct RankedMatch {
  double score = 0.0;
  bool true_positive = false;
};

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
  double score = 0.0;
};

// IoU thresholds 0.50, 0.55, ..., 0.95.
inline std::vector<double> coco_iou_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(static_cast<double>(50 + 5 * i) / 100.0);
  return t;
}

inline std::size_t count_ground_truth(const EvalRecord& rec) {
  std::size_t n = 0;
  for (const auto& f : rec) n += f.ground_truth.size();
  return n;
}

// Detections ranked by descending score (ties by frame, then list order);
// each takes the best-IoU unmatched ground truth of its frame if that IoU
// reaches the threshold.
inline std::vector<RankedMatch> match_detections(const EvalRecord& rec, double iou_threshold) {
  struct Ref {
    std::size_t frame, index;
    double score;
  };
  std::vector<Ref> order;
  for (std::size_t f = 0; f < rec.size(); ++f)
    for (std::size_t i = 0; i < rec[f].detections.size(); ++i) {
      const double s = rec[f].detections[i].score;
      require(s >= 0 && s <= 1, "average_precision: score outside [0, 1]");
      order.push_back({f, i, s});
    }
  std::stable_sort(order.begin(), order.end(), [](const Ref& a, const Ref& b) { return a.score > b.score; });

  std::vector<std::vector<bool>> taken(rec.size());
  for (std::size_t f = 0; f < rec.size(); ++f) taken[f].assign(rec[f].ground_truth.size(), false);
  std::vector<RankedMatch> out;
  out.reserve(order.size());
  for (const auto& r : order) {
    const Box2D& box = rec[r.frame].detections[r.index].box;
    const auto& gts = rec[r.frame].ground_truth;
    double best = -1.0;
    std::size_t best_j = gts.size();
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (taken[r.frame][j]) continue;
      const double iou = box_iou(box, gts[j]);
      if (iou > best) {
        best = iou;
        best_j = j;
      }
    }
    const bool tp = best_j < gts.size() && best >= iou_threshold;
    if (tp) taken[r.frame][best_j] = true;
    out.push_back({r.score, tp});
  }
  return out;
}

// All-point interpolated AP: each true positive adds 1/G recall at the
// precision envelope (max precision at any deeper rank).
inline double ap_from_ranking(const std::vector<RankedMatch>& ranking, std::size_t num_gt) {
  if (num_gt == 0 || ranking.empty()) return 0.0;
  std::vector<double> precision(ranking.size());
  std::size_t tp = 0;
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    tp += ranking[i].true_positive;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  for (std::size_t i = ranking.size() - 1; i-- > 0;) precision[i] = std::max(precision[i], precision[i + 1]);
  double sum = 0.0;
  for (std::size_t i = 0; i < ranking.size(); ++i)
    if (ranking[i].true_positive) sum += precision[i];
  return sum / static_cast<double>(num_gt);
}

inline std::vector<PrPoint> pr_curve(const std::vector<RankedMatch>& ranking, std::size_t num_gt) {
  std::vector<PrPoint> curve;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    tp += ranking[i].true_positive;
    curve.push_back({num_gt ? static_cast<double>(tp) / static_cast<double>(num_gt) : 0.0,
                     static_cast<double>(tp) / static_cast<double>(i + 1), ranking[i].score});
  }
  return curve;
}

struct ApReport {
  std::vector<double> thresholds;
  std::vector<double> ap;      // per threshold
  std::vector<double> recall;  // per threshold
  double ap_50_95 = 0.0;
  double ap_50 = 0.0;
  double ap_75 = 0.0;
  double recall_50 = 0.0;
  std::size_t num_gt = 0;
  std::size_t num_detections = 0;
  std::map<double, std::vector<PrPoint>> pr_curves;  // keyed by IoU threshold
};

inline const std::vector<double>& pr_curve_thresholds() {
  static const std::vector<double> t{0.5, 0.65, 0.75};
  return t;
}

// AP per threshold, AP_{50:95} (mean over the COCO thresholds), recall at
// 0.5 and PR curves at 0.5 / 0.65 / 0.75. With no ground truth every AP
// and recall is 0.
inline ApReport average_precision(const EvalRecord& rec, std::vector<double> thresholds = coco_iou_thresholds()) {
  require(!thresholds.empty(), "average_precision: need at least one IoU threshold");
  ApReport r;
  r.thresholds = thresholds;
  r.num_gt = count_ground_truth(rec);
  for (const auto& f : rec) r.num_detections += f.detections.size();
  auto evaluate = [&](double thr, std::vector<PrPoint>* curve) {
    const auto ranking = match_detections(rec, thr);
    const std::size_t tp = static_cast<std::size_t>(
        std::count_if(ranking.begin(), ranking.end(), [](const RankedMatch& m) { return m.true_positive; }));
    if (curve) *curve = pr_curve(ranking, r.num_gt);
    return std::pair{ap_from_ranking(ranking, r.num_gt),
                     r.num_gt ? static_cast<double>(tp) / static_cast<double>(r.num_gt) : 0.0};
  };
  for (double t : thresholds) {
    const auto [ap, rec_t] = evaluate(t, nullptr);
    r.ap.push_back(ap);
    r.recall.push_back(rec_t);
  }
  r.ap_50_95 = std::accumulate(r.ap.begin(), r.ap.end(), 0.0) / static_cast<double>(r.ap.size());
  const auto [ap50, rec50] = evaluate(0.5, nullptr);
  r.ap_50 = ap50;
  r.recall_50 = rec50;
  r.ap_75 = evaluate(0.75, nullptr).first;
  for (double t : pr_curve_thresholds()) evaluate(t, &r.pr_curves[t]);
  return r;
}

}  // namespace rfmask
