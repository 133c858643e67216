#pragma once

// Ground-truth regression and segmentation targets derived from an annotated
// instance map.

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>

#include "hovernet/core.hpp"
#include "hovernet/grid.hpp"

namespace hovernet {

/// Two-channel map of normalized horizontal/vertical offsets to each
/// instance's centre of mass. Used both for targets and for predictions.
struct HoverMap {
  RealGrid horizontal;
  RealGrid vertical;

  HoverMap(std::size_t height, std::size_t width)
      : horizontal(height, width, 0.0), vertical(height, width, 0.0) {}
  HoverMap(RealGrid h, RealGrid v) : horizontal(std::move(h)), vertical(std::move(v)) {
    require_same_shape(horizontal, vertical, "hover map channels");
  }

  std::size_t height() const noexcept { return horizontal.height(); }
  std::size_t width() const noexcept { return horizontal.width(); }

  friend bool operator==(const HoverMap&, const HoverMap&) = default;
};

using TypeAssignment = std::map<Label, ClassId>;

namespace detail {

struct CentreAccum {
  std::int64_t sum_r = 0;
  std::int64_t sum_c = 0;
  std::int64_t n = 0;
  std::int64_t centre_r = 0;
  std::int64_t centre_c = 0;
  std::int64_t max_neg_r = 0;
  std::int64_t max_pos_r = 0;
  std::int64_t max_neg_c = 0;
  std::int64_t max_pos_c = 0;
};

// Nearest integer to sum/n with halves rounded up, in exact integer arithmetic.
inline std::int64_t rounded_mean(std::int64_t sum, std::int64_t n) {
  const std::int64_t num = 2 * sum + n;
  const std::int64_t den = 2 * n;
  std::int64_t q = num / den;
  if (num % den != 0 && num < 0) --q;
  return q;
}

inline double normalize_offset(std::int64_t d, std::int64_t max_neg, std::int64_t max_pos) {
  if (d == 0) return 0.0;
  if (d < 0) return static_cast<double>(d) / static_cast<double>(max_neg > 0 ? max_neg : 1);
  return static_cast<double>(d) / static_cast<double>(max_pos > 0 ? max_pos : 1);
}

}  // namespace detail

/// Horizontal and vertical distance maps. For every instance the centre of
/// mass is rounded to the nearest pixel; offsets left/above of it are divided
/// by the largest such offset and offsets right/below by the largest positive
/// one, so each side spans exactly to -1 / +1 and the centre line is 0.
inline HoverMap hover_targets(const InstanceMap& im) {
  std::unordered_map<Label, detail::CentreAccum> acc;
  for (std::size_t r = 0; r < im.height(); ++r) {
    for (std::size_t c = 0; c < im.width(); ++c) {
      const Label l = im(r, c);
      if (l == 0) continue;
      auto& a = acc[l];
      a.sum_r += static_cast<std::int64_t>(r);
      a.sum_c += static_cast<std::int64_t>(c);
      ++a.n;
    }
  }
  for (auto& [label, a] : acc) {
    a.centre_r = detail::rounded_mean(a.sum_r, a.n);
    a.centre_c = detail::rounded_mean(a.sum_c, a.n);
  }
  for (std::size_t r = 0; r < im.height(); ++r) {
    for (std::size_t c = 0; c < im.width(); ++c) {
      const Label l = im(r, c);
      if (l == 0) continue;
      auto& a = acc[l];
      const std::int64_t dr = static_cast<std::int64_t>(r) - a.centre_r;
      const std::int64_t dc = static_cast<std::int64_t>(c) - a.centre_c;
      a.max_neg_r = std::max(a.max_neg_r, -dr);
      a.max_pos_r = std::max(a.max_pos_r, dr);
      a.max_neg_c = std::max(a.max_neg_c, -dc);
      a.max_pos_c = std::max(a.max_pos_c, dc);
    }
  }
  HoverMap out(im.height(), im.width());
  for (std::size_t r = 0; r < im.height(); ++r) {
    for (std::size_t c = 0; c < im.width(); ++c) {
      const Label l = im(r, c);
      if (l == 0) continue;
      const auto& a = acc.at(l);
      out.horizontal(r, c) = detail::normalize_offset(static_cast<std::int64_t>(c) - a.centre_c,
                                                      a.max_neg_c, a.max_pos_c);
      out.vertical(r, c) = detail::normalize_offset(static_cast<std::int64_t>(r) - a.centre_r,
                                                    a.max_neg_r, a.max_pos_r);
    }
  }
  return out;
}

inline BinaryMask binary_target(const InstanceMap& im) {
  BinaryMask out(im.height(), im.width(), 0);
  for (std::size_t i = 0; i < im.size(); ++i) out[i] = im[i] > 0 ? 1 : 0;
  return out;
}

inline TypeMap type_target(const InstanceMap& im, const TypeAssignment& types) {
  for (const auto& [label, cls] : types) {
    if (cls < 1) {
      throw Error(ErrorKind::invalid_argument, "class id for label " + std::to_string(label) +
                                                   " must be >= 1, got " + std::to_string(cls));
    }
  }
  TypeMap out(im.height(), im.width(), 0);
  for (std::size_t i = 0; i < im.size(); ++i) {
    const Label l = im[i];
    if (l == 0) continue;
    const auto it = types.find(l);
    if (it == types.end()) {
      throw Error(ErrorKind::missing_label,
                  "no class id given for instance label " + std::to_string(l));
    }
    out[i] = it->second;
  }
  return out;
}

}  // namespace hovernet
