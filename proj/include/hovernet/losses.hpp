#pragma once

// Reference values for the training objective: regression losses on the
// distance maps, cross entropy and soft Dice on the probability maps, and
// their weighted sum. Intended for validating framework implementations.

#include <algorithm>
#include <cmath>
#include <optional>

#include "hovernet/filters.hpp"
#include "hovernet/grid.hpp"
#include "hovernet/targetgen.hpp"

namespace hovernet {

inline constexpr double kLogFloor = 1e-7;
inline constexpr double kDiceEpsilon = 1.0e-3;
inline constexpr double kStackSumTolerance = 1e-5;

/// MSE over both channels and all pixels (n = 2 x pixels).
inline double loss_a(const HoverMap& pred, const HoverMap& gt) {
  require_same_shape(pred.horizontal, gt.horizontal, "loss_a");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.horizontal.size(); ++i) {
    const double dx = pred.horizontal[i] - gt.horizontal[i];
    const double dy = pred.vertical[i] - gt.vertical[i];
    sum += dx * dx + dy * dy;
  }
  return sum / static_cast<double>(2 * pred.horizontal.size());
}

/// d loss_a / d pred, per channel.
inline HoverMap loss_a_gradient(const HoverMap& pred, const HoverMap& gt) {
  require_same_shape(pred.horizontal, gt.horizontal, "loss_a");
  HoverMap g(pred.height(), pred.width());
  const auto n = static_cast<double>(2 * pred.horizontal.size());
  for (std::size_t i = 0; i < pred.horizontal.size(); ++i) {
    g.horizontal[i] = 2.0 * (pred.horizontal[i] - gt.horizontal[i]) / n;
    g.vertical[i] = 2.0 * (pred.vertical[i] - gt.vertical[i]) / n;
  }
  return g;
}

/// MSE between the x-derivative of the horizontal channels plus MSE between
/// the y-derivative of the vertical channels, both over nuclear pixels only.
/// Derivatives use the 3x3 Sobel kernels with symmetric border reflection.
inline double loss_b(const HoverMap& pred, const HoverMap& gt, const BinaryMask& nuclear) {
  require_same_shape(pred.horizontal, gt.horizontal, "loss_b");
  require_same_shape(pred.horizontal, nuclear, "loss_b nuclear mask");
  std::size_t m = 0;
  for (auto v : nuclear) m += v != 0;
  if (m == 0) {
    throw Error(ErrorKind::undefined_value, "loss_b is undefined without nuclear pixels");
  }
  const RealGrid px = sobel(pred.horizontal, Axis::horizontal);
  const RealGrid gx = sobel(gt.horizontal, Axis::horizontal);
  const RealGrid py = sobel(pred.vertical, Axis::vertical);
  const RealGrid gy = sobel(gt.vertical, Axis::vertical);
  double sx = 0.0;
  double sy = 0.0;
  for (std::size_t i = 0; i < nuclear.size(); ++i) {
    if (nuclear[i] == 0) continue;
    sx += (px[i] - gx[i]) * (px[i] - gx[i]);
    sy += (py[i] - gy[i]) * (py[i] - gy[i]);
  }
  return sx / static_cast<double>(m) + sy / static_cast<double>(m);
}

inline void require_stack(const GridStack& s, std::string_view what) {
  if (s.empty()) throw Error(ErrorKind::invalid_argument, std::string(what) + ": empty stack");
  for (const auto& g : s) require_same_shape(s.front(), g, what);
}

/// Checks that the channels of a probability stack sum to 1 per pixel.
inline void require_distribution(const GridStack& s, std::string_view what) {
  require_stack(s, what);
  for (std::size_t i = 0; i < s.front().size(); ++i) {
    double sum = 0.0;
    for (const auto& g : s) sum += g[i];
    if (std::abs(sum - 1.0) > kStackSumTolerance) {
      throw Error(ErrorKind::invalid_argument,
                  std::string(what) + ": probabilities at pixel " + std::to_string(i) +
                      " sum to " + std::to_string(sum));
    }
  }
}

/// -1/n sum_i sum_k X_ik log Y_ik with Y floored at 1e-7.
inline double cross_entropy(const GridStack& pred, const GridStack& gt_onehot) {
  require_stack(pred, "cross entropy prediction");
  require_stack(gt_onehot, "cross entropy target");
  if (pred.size() != gt_onehot.size()) {
    throw Error(ErrorKind::dimension_mismatch, "cross entropy: class counts differ");
  }
  require_same_shape(pred.front(), gt_onehot.front(), "cross entropy");
  const std::size_t n = pred.front().size();
  double sum = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      const double x = gt_onehot[k][i];
      if (x != 0.0) sum += x * std::log(std::max(pred[k][i], kLogFloor));
    }
  }
  return -sum / static_cast<double>(n);
}

/// Soft Dice loss 1 - (2 sum(YX) + eps) / (sum Y + sum X + eps).
inline double dice_loss(const RealGrid& pred, const RealGrid& gt, double epsilon = kDiceEpsilon) {
  require_same_shape(pred, gt, "dice loss");
  double inter = 0.0;
  double sy = 0.0;
  double sx = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += pred[i] * gt[i];
    sy += pred[i];
    sx += gt[i];
  }
  return 1.0 - (2.0 * inter + epsilon) / (sy + sx + epsilon);
}

/// d dice_loss / d pred.
inline RealGrid dice_loss_gradient(const RealGrid& pred, const RealGrid& gt,
                                   double epsilon = kDiceEpsilon) {
  require_same_shape(pred, gt, "dice loss");
  double inter = 0.0;
  double s = epsilon;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += pred[i] * gt[i];
    s += pred[i] + gt[i];
  }
  const double num = 2.0 * inter + epsilon;
  RealGrid g(pred.height(), pred.width(), 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) g[i] = -(2.0 * gt[i] * s - num) / (s * s);
  return g;
}

/// One-vs-rest soft Dice averaged over the foreground classes 1..K-1.
inline double dice_loss_multiclass(const GridStack& pred, const GridStack& gt_onehot,
                                   double epsilon = kDiceEpsilon) {
  require_stack(pred, "dice loss prediction");
  if (pred.size() != gt_onehot.size() || pred.size() < 2) {
    throw Error(ErrorKind::dimension_mismatch, "dice loss: class counts differ or K < 2");
  }
  double sum = 0.0;
  for (std::size_t k = 1; k < pred.size(); ++k) sum += dice_loss(pred[k], gt_onehot[k], epsilon);
  return sum / static_cast<double>(pred.size() - 1);
}

/// K-channel one-hot encoding of a class map (class 0 = background).
template <class G>
GridStack one_hot(const G& classes, std::size_t k) {
  GridStack out(k, RealGrid(classes.height(), classes.width(), 0.0));
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const auto c = static_cast<std::size_t>(classes[i]);
    if (c >= k) {
      throw Error(ErrorKind::invalid_argument,
                  "class id " + std::to_string(c) + " out of range for K=" + std::to_string(k));
    }
    out[c][i] = 1.0;
  }
  return out;
}

/// [1 - q, q] from a foreground probability map.
inline GridStack binary_stack(const RealGrid& q) {
  GridStack out(2, RealGrid(q.height(), q.width(), 0.0));
  for (std::size_t i = 0; i < q.size(); ++i) {
    out[0][i] = 1.0 - q[i];
    out[1][i] = q[i];
  }
  return out;
}

struct LossWeights {
  double a = 1.0;
  double b = 2.0;
  double c = 1.0;
  double d = 1.0;
  double e = 1.0;
  double f = 1.0;
};

struct LossInputs {
  HoverMap pred_hover;
  RealGrid pred_np;  // foreground probability q
  std::optional<GridStack> pred_nc;
  HoverMap gt_hover;
  BinaryMask gt_np;
  std::optional<TypeMap> gt_nc;
  double epsilon = kDiceEpsilon;
};

struct LossBreakdown {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double d = 0.0;
  double e = 0.0;
  double f = 0.0;
  bool has_nc = false;
  double total = 0.0;
};

inline double weighted_total(const LossBreakdown& t, const LossWeights& w) {
  double sum = w.a * t.a + w.b * t.b + w.c * t.c + w.d * t.d;
  if (t.has_nc) sum += w.e * t.e + w.f * t.f;
  return sum;
}

/// Every term of the objective plus the weighted sum. The classification
/// terms are evaluated only when both type labels and predictions exist.
inline LossBreakdown total_loss(const LossInputs& in, const LossWeights& w = {}) {
  require_same_shape(in.pred_np, in.gt_np, "total loss: NP prediction vs target");
  LossBreakdown t;
  t.a = loss_a(in.pred_hover, in.gt_hover);
  t.b = loss_b(in.pred_hover, in.gt_hover, in.gt_np);
  const RealGrid psi = grid_cast<RealGrid>(in.gt_np);
  t.c = cross_entropy(binary_stack(in.pred_np), one_hot(in.gt_np, 2));
  t.d = dice_loss(in.pred_np, psi, in.epsilon);
  if (in.gt_nc && in.pred_nc) {
    require_distribution(*in.pred_nc, "NC prediction");
    const GridStack target = one_hot(*in.gt_nc, in.pred_nc->size());
    t.e = cross_entropy(*in.pred_nc, target);
    t.f = dice_loss_multiclass(*in.pred_nc, target, in.epsilon);
    t.has_nc = true;
  }
  t.total = weighted_total(t, w);
  return t;
}

}  // namespace hovernet
