#pragma once

// Segmentation metrics (DICE, DICE2, AJI, panoptic quality) and the
// detection/classification scores used for nuclear type evaluation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hovernet/core.hpp"
#include "hovernet/grid.hpp"

namespace hovernet {

/// Sentinel for ground-truth nuclei without a type annotation.
inline constexpr ClassId kUnlabelled = -1;

namespace detail {

/// Per-label areas and the sparse GT x prediction intersection table.
struct OverlapTable {
  std::map<Label, std::uint64_t> gt_area;
  std::map<Label, std::uint64_t> pred_area;
  // gt label -> (pred label -> intersection), both ordered ascending
  std::map<Label, std::map<Label, std::uint64_t>> inter;

  OverlapTable(const InstanceMap& gt, const InstanceMap& pred) {
    require_same_shape(gt, pred, "ground truth vs prediction");
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const Label g = gt[i];
      const Label p = pred[i];
      if (g != 0) ++gt_area[g];
      if (p != 0) ++pred_area[p];
      if (g != 0 && p != 0) ++inter[g][p];
    }
  }

  std::uint64_t union_of(Label g, Label p, std::uint64_t i) const {
    return gt_area.at(g) + pred_area.at(p) - i;
  }
};

}  // namespace detail

/// 2|X n Y| / (|X| + |Y|); 1.0 when both masks are empty.
template <class A, class B>
double dice_score(const A& x, const B& y) {
  require_same_shape(x, y, "dice");
  std::uint64_t nx = 0;
  std::uint64_t ny = 0;
  std::uint64_t both = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool a = x[i] != 0;
    const bool b = y[i] != 0;
    nx += a;
    ny += b;
    both += a && b;
  }
  if (nx + ny == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(nx + ny);
}

/// Ensemble Dice. Each GT nucleus is paired with the prediction it overlaps
/// most (ties to the lower label); 2|x n y| and |x| + |y| are summed over all
/// GT nuclei, with a GT nucleus that overlaps nothing adding |x| only.
/// Both maps empty gives 1.0; an empty GT with predictions gives 0.0.
inline double dice2_score(const InstanceMap& gt, const InstanceMap& pred) {
  const detail::OverlapTable t(gt, pred);
  if (t.gt_area.empty()) return t.pred_area.empty() ? 1.0 : 0.0;
  std::uint64_t num = 0;
  std::uint64_t den = 0;
  for (const auto& [g, area] : t.gt_area) {
    const auto it = t.inter.find(g);
    if (it == t.inter.end()) {
      den += area;
      continue;
    }
    Label best = 0;
    std::uint64_t best_i = 0;
    for (const auto& [p, i] : it->second) {
      if (i > best_i) {
        best = p;
        best_i = i;
      }
    }
    num += 2 * best_i;
    den += area + t.pred_area.at(best);
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

/// Aggregated Jaccard Index. Each GT nucleus takes the prediction with the
/// highest positive IoU (ties: larger intersection, then lower label) and
/// adds the pair's intersection and union; a GT nucleus with no overlap adds
/// its area to the union. Predictions never selected add their area to the
/// union once. Both maps empty gives 1.0.
inline double aji_score(const InstanceMap& gt, const InstanceMap& pred) {
  const detail::OverlapTable t(gt, pred);
  if (t.gt_area.empty() && t.pred_area.empty()) return 1.0;
  std::uint64_t inter_sum = 0;
  std::uint64_t union_sum = 0;
  std::set<Label> used;
  for (const auto& [g, area] : t.gt_area) {
    const auto it = t.inter.find(g);
    if (it == t.inter.end()) {
      union_sum += area;
      continue;
    }
    Label best = 0;
    std::uint64_t best_i = 0;
    std::uint64_t best_u = 1;
    for (const auto& [p, i] : it->second) {
      const std::uint64_t u = t.union_of(g, p, i);
      // i/u > best_i/best_u, compared exactly
      const auto lhs = static_cast<unsigned __int128>(i) * best_u;
      const auto rhs = static_cast<unsigned __int128>(best_i) * u;
      if (best == 0 || lhs > rhs || (lhs == rhs && i > best_i)) {
        best = p;
        best_i = i;
        best_u = u;
      }
    }
    inter_sum += best_i;
    union_sum += best_u;
    used.insert(best);
  }
  for (const auto& [p, area] : t.pred_area) {
    if (!used.contains(p)) union_sum += area;
  }
  return static_cast<double>(inter_sum) / static_cast<double>(union_sum);
}

struct IouPair {
  Label gt;
  Label pred;
  double iou;
};

struct SegMatchResult {
  std::vector<IouPair> pairs;      // ascending by gt label
  std::vector<Label> unmatched_gt;   // false negatives
  std::vector<Label> unmatched_pred; // false positives
};

/// Pairs every GT/prediction couple with IoU strictly above 0.5. Such pairs
/// are necessarily unique, so no assignment step is required.
inline SegMatchResult match_iou(const InstanceMap& gt, const InstanceMap& pred) {
  const detail::OverlapTable t(gt, pred);
  SegMatchResult res;
  std::set<Label> matched_pred;
  for (const auto& [g, area] : t.gt_area) {
    bool matched = false;
    if (const auto it = t.inter.find(g); it != t.inter.end()) {
      for (const auto& [p, i] : it->second) {
        const std::uint64_t u = t.union_of(g, p, i);
        if (2 * i <= u) continue;
        if (matched || matched_pred.contains(p)) {
          throw Error(ErrorKind::undefined_value, "IoU > 0.5 matching is not unique");
        }
        matched = true;
        matched_pred.insert(p);
        res.pairs.push_back({g, p, static_cast<double>(i) / static_cast<double>(u)});
      }
    }
    if (!matched) res.unmatched_gt.push_back(g);
  }
  for (const auto& [p, area] : t.pred_area) {
    if (!matched_pred.contains(p)) res.unmatched_pred.push_back(p);
  }
  return res;
}

struct PanopticQuality {
  double dq;
  double sq;
  double pq;
};

/// DQ = |TP| / (|TP| + |FP|/2 + |FN|/2), SQ = mean matched IoU, PQ = DQ * SQ.
/// Nothing to match on either side counts as perfect.
inline PanopticQuality panoptic_quality(const SegMatchResult& m) {
  const auto tp = static_cast<double>(m.pairs.size());
  const auto fp = static_cast<double>(m.unmatched_pred.size());
  const auto fn = static_cast<double>(m.unmatched_gt.size());
  if (m.pairs.empty()) {
    if (m.unmatched_pred.empty() && m.unmatched_gt.empty()) return {1.0, 1.0, 1.0};
    return {0.0, 0.0, 0.0};
  }
  // summed in sorted order so the result does not depend on label order
  std::vector<double> ious;
  for (const auto& pair : m.pairs) ious.push_back(pair.iou);
  std::sort(ious.begin(), ious.end());
  double iou_sum = 0.0;
  for (double v : ious) iou_sum += v;
  const double dq = tp / (tp + 0.5 * fp + 0.5 * fn);
  const double sq = iou_sum / tp;
  return {dq, sq, dq * sq};
}

struct SegMetrics {
  double dice = 0.0;
  double dice2 = 0.0;
  double aji = 0.0;
  double dq = 0.0;
  double sq = 0.0;
  double pq = 0.0;
};

inline SegMetrics evaluate_segmentation(const InstanceMap& gt, const InstanceMap& pred) {
  SegMetrics m;
  m.dice = dice_score(gt, pred);
  m.dice2 = dice2_score(gt, pred);
  m.aji = aji_score(gt, pred);
  const auto pq = panoptic_quality(match_iou(gt, pred));
  m.dq = pq.dq;
  m.sq = pq.sq;
  m.pq = pq.pq;
  return m;
}

/// Unweighted per-field mean over images. PQ is averaged directly rather
/// than recomputed from the averaged DQ and SQ.
inline SegMetrics dataset_average(std::span<const SegMetrics> per_image) {
  if (per_image.empty()) {
    throw Error(ErrorKind::invalid_argument, "dataset average of an empty image list");
  }
  SegMetrics avg;
  for (const auto& m : per_image) {
    avg.dice += m.dice;
    avg.dice2 += m.dice2;
    avg.aji += m.aji;
    avg.dq += m.dq;
    avg.sq += m.sq;
    avg.pq += m.pq;
  }
  const auto n = static_cast<double>(per_image.size());
  avg.dice /= n;
  avg.dice2 /= n;
  avg.aji /= n;
  avg.dq /= n;
  avg.sq /= n;
  avg.pq /= n;
  return avg;
}

// ---------------------------------------------------------------------------
// Detection and classification

struct DetPair {
  std::size_t gt;
  std::size_t pred;
  double distance;
};

struct DetMatchResult {
  std::vector<DetPair> tp_pairs;
  std::vector<std::size_t> fn_gt;
  std::vector<std::size_t> fp_pred;
  double radius = 0.0;
};

/// Greedy nearest-first one-to-one matching of centroids within radius.
/// Candidates are taken in ascending distance (ties: lower GT index, then
/// lower prediction index) and accepted when both sides are still free.
inline DetMatchResult match_by_radius(std::span<const Point> gt, std::span<const Point> pred,
                                      double radius) {
  if (!(radius > 0.0)) throw Error(ErrorKind::invalid_argument, "radius must be positive");
  std::vector<DetPair> candidates;
  for (std::size_t g = 0; g < gt.size(); ++g) {
    for (std::size_t p = 0; p < pred.size(); ++p) {
      const double d = std::hypot(gt[g].row - pred[p].row, gt[g].col - pred[p].col);
      if (d <= radius) candidates.push_back({g, p, d});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const DetPair& a, const DetPair& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.gt != b.gt) return a.gt < b.gt;
    return a.pred < b.pred;
  });
  std::vector<bool> gt_used(gt.size(), false);
  std::vector<bool> pred_used(pred.size(), false);
  DetMatchResult res;
  res.radius = radius;
  for (const auto& c : candidates) {
    if (gt_used[c.gt] || pred_used[c.pred]) continue;
    gt_used[c.gt] = true;
    pred_used[c.pred] = true;
    res.tp_pairs.push_back(c);
  }
  std::sort(res.tp_pairs.begin(), res.tp_pairs.end(),
            [](const DetPair& a, const DetPair& b) { return a.gt < b.gt; });
  for (std::size_t g = 0; g < gt.size(); ++g) {
    if (!gt_used[g]) res.fn_gt.push_back(g);
  }
  for (std::size_t p = 0; p < pred.size(); ++p) {
    if (!pred_used[p]) res.fp_pred.push_back(p);
  }
  return res;
}

/// Per-type split of the correctly detected pairs plus the type's share of
/// the detection errors.
struct TypeCounts {
  std::uint64_t tp_c = 0;  // correct, predicted as t
  std::uint64_t tn_c = 0;  // correct, predicted as another type
  std::uint64_t fp_c = 0;  // wrong, predicted as t
  std::uint64_t fn_c = 0;  // wrong, predicted as another type
  std::uint64_t fp_d = 0;  // unmatched predictions of type t
  std::uint64_t fn_d = 0;  // unmatched GT of type t
  double f_c = 0.0;
};

struct ClassMetrics {
  double f_d = 0.0;
  double f_c_all = 0.0;  // F_c over all types combined
  std::map<ClassId, TypeCounts> per_type;
  std::uint64_t tp_d = 0;
  std::uint64_t fp_d = 0;
  std::uint64_t fn_d = 0;
  std::uint64_t correct = 0;    // A_c
  std::uint64_t incorrect = 0;  // B_c, after removing unlabelled pairs
  std::uint64_t unlabelled_matched = 0;
  std::uint64_t unlabelled_gt = 0;
};

inline constexpr double kAlphaClassFp = 2.0;
inline constexpr double kAlphaClassFn = 2.0;
inline constexpr double kAlphaDetFp = 1.0;
inline constexpr double kAlphaDetFn = 1.0;

namespace detail {

inline double ratio_or_zero(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace detail

/// Recomputes every score in cm from its counts. Used after pooling counts
/// over several images.
inline void finalize_scores(ClassMetrics& cm) {
  const auto tp_d = static_cast<double>(cm.tp_d);
  cm.f_d = detail::ratio_or_zero(2.0 * tp_d,
                                 2.0 * tp_d + static_cast<double>(cm.fp_d + cm.fn_d));
  const auto a = static_cast<double>(cm.correct);
  const auto b = static_cast<double>(cm.incorrect);
  cm.f_c_all = detail::ratio_or_zero(
      2.0 * a, 2.0 * (a + b) + static_cast<double>(cm.fp_d) + static_cast<double>(cm.fn_d));
  for (auto& [t, c] : cm.per_type) {
    const auto agree = static_cast<double>(c.tp_c + c.tn_c);
    const double den = 2.0 * agree + kAlphaClassFp * static_cast<double>(c.fp_c) +
                       kAlphaClassFn * static_cast<double>(c.fn_c) +
                       kAlphaDetFp * static_cast<double>(c.fp_d) +
                       kAlphaDetFn * static_cast<double>(c.fn_d);
    c.f_c = detail::ratio_or_zero(2.0 * agree, den);
  }
}

/// Combined detection + classification scores for one image.
///
/// gt_types[i] is the type of GT nucleus i (or kUnlabelled); pred_types[j]
/// the type of prediction j. A matched pair whose GT is unlabelled is first
/// counted as misclassified (into B_c and every type's FN_c) and then that
/// count is subtracted from both again, so it only influences detection.
inline ClassMetrics classification_scores(const DetMatchResult& det,
                                          std::span<const ClassId> gt_types,
                                          std::span<const ClassId> pred_types,
                                          const std::set<ClassId>& types) {
  for (std::size_t j = 0; j < pred_types.size(); ++j) {
    if (!types.contains(pred_types[j])) {
      throw Error(ErrorKind::unknown_type, "prediction " + std::to_string(j) +
                                               " has unknown type id " +
                                               std::to_string(pred_types[j]));
    }
  }
  for (std::size_t i = 0; i < gt_types.size(); ++i) {
    if (gt_types[i] != kUnlabelled && !types.contains(gt_types[i])) {
      throw Error(ErrorKind::unknown_type, "ground truth " + std::to_string(i) +
                                               " has unknown type id " +
                                               std::to_string(gt_types[i]));
    }
  }
  auto gt_type = [&](std::size_t i) {
    if (i >= gt_types.size()) {
      throw Error(ErrorKind::invalid_argument, "no type given for ground truth " + std::to_string(i));
    }
    return gt_types[i];
  };
  auto pred_type = [&](std::size_t j) {
    if (j >= pred_types.size()) {
      throw Error(ErrorKind::invalid_argument, "no type given for prediction " + std::to_string(j));
    }
    return pred_types[j];
  };

  ClassMetrics cm;
  for (ClassId t : types) cm.per_type[t];
  cm.tp_d = det.tp_pairs.size();
  cm.fp_d = det.fp_pred.size();
  cm.fn_d = det.fn_gt.size();
  for (ClassId g : gt_types) cm.unlabelled_gt += g == kUnlabelled;

  for (const auto& pair : det.tp_pairs) {
    const ClassId g = gt_type(pair.gt);
    const ClassId p = pred_type(pair.pred);
    const bool correct = g == p;
    if (g == kUnlabelled) ++cm.unlabelled_matched;
    if (correct) {
      ++cm.correct;
    } else {
      ++cm.incorrect;
    }
    for (auto& [t, c] : cm.per_type) {
      if (g == kUnlabelled) {
        ++c.fn_c;
      } else if (correct) {
        ++(p == t ? c.tp_c : c.tn_c);
      } else {
        ++(p == t ? c.fp_c : c.fn_c);
      }
    }
  }
  cm.incorrect -= cm.unlabelled_matched;
  for (auto& [t, c] : cm.per_type) c.fn_c -= cm.unlabelled_matched;

  for (std::size_t j : det.fp_pred) ++cm.per_type[pred_type(j)].fp_d;
  for (std::size_t i : det.fn_gt) {
    const ClassId g = gt_type(i);
    if (g != kUnlabelled) ++cm.per_type[g].fn_d;
  }
  finalize_scores(cm);
  return cm;
}

/// Sums the counts of b into a (scores are not refreshed).
inline void accumulate_counts(ClassMetrics& a, const ClassMetrics& b) {
  a.tp_d += b.tp_d;
  a.fp_d += b.fp_d;
  a.fn_d += b.fn_d;
  a.correct += b.correct;
  a.incorrect += b.incorrect;
  a.unlabelled_matched += b.unlabelled_matched;
  a.unlabelled_gt += b.unlabelled_gt;
  for (const auto& [t, c] : b.per_type) {
    auto& d = a.per_type[t];
    d.tp_c += c.tp_c;
    d.tn_c += c.tn_c;
    d.fp_c += c.fp_c;
    d.fn_c += c.fn_c;
    d.fp_d += c.fp_d;
    d.fn_d += c.fn_d;
  }
}

struct Decomposition {
  double f_c_all;           // 2A / (2(A+B) + FP_d + FN_d)
  double f_d_times_accuracy;  // F_d * A / (A+B)
};

/// Both sides of F_c over all types = F_d x classification accuracy among
/// detected nuclei. Requires exhaustively labelled ground truth.
inline Decomposition decomposition_check(const ClassMetrics& cm) {
  if (cm.unlabelled_gt > 0) {
    throw Error(ErrorKind::invalid_argument,
                "decomposition requires exhaustively labelled ground truth");
  }
  const auto a = static_cast<double>(cm.correct);
  const auto b = static_cast<double>(cm.incorrect);
  const auto errors = static_cast<double>(cm.fp_d) + static_cast<double>(cm.fn_d);
  const double lhs = detail::ratio_or_zero(2.0 * a, 2.0 * (a + b) + errors);
  const double f_d = detail::ratio_or_zero(2.0 * (a + b), 2.0 * (a + b) + errors);
  const double accuracy = detail::ratio_or_zero(a, a + b);
  return {lhs, f_d * accuracy};
}

}  // namespace hovernet
