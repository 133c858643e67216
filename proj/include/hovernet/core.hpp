#pragma once

// Connected-component labelling and per-instance bookkeeping shared by the
// target generator, the post-processing pipeline and the metrics.

#include <algorithm>
#include <array>
#include <cstddef>
#include <limits>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hovernet/grid.hpp"

namespace hovernet {

enum class Connectivity { four = 4, eight = 8 };

struct Offset {
  int dr;
  int dc;
};

inline constexpr std::array<Offset, 4> kNeighbours4{{{-1, 0}, {0, -1}, {0, 1}, {1, 0}}};
inline constexpr std::array<Offset, 8> kNeighbours8{
    {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}}};

/// Calls fn(nr, nc) for every in-bounds neighbour of (r, c).
template <class Fn>
void for_each_neighbour(std::size_t r, std::size_t c, std::size_t height, std::size_t width,
                        Connectivity conn, Fn&& fn) {
  auto visit = [&](const auto& offsets) {
    for (const auto& o : offsets) {
      const auto nr = static_cast<std::ptrdiff_t>(r) + o.dr;
      const auto nc = static_cast<std::ptrdiff_t>(c) + o.dc;
      if (nr < 0 || nc < 0 || nr >= static_cast<std::ptrdiff_t>(height) ||
          nc >= static_cast<std::ptrdiff_t>(width)) {
        continue;
      }
      fn(static_cast<std::size_t>(nr), static_cast<std::size_t>(nc));
    }
  };
  if (conn == Connectivity::four) {
    visit(kNeighbours4);
  } else {
    visit(kNeighbours8);
  }
}

/// Labels connected foreground regions 1..N in raster order of each region's
/// first pixel. Works on any grid; a pixel is foreground when non-zero.
template <class G>
InstanceMap connected_components(const G& mask, Connectivity conn = Connectivity::eight) {
  const std::size_t h = mask.height();
  const std::size_t w = mask.width();
  InstanceMap out(h, w, 0);
  std::vector<std::size_t> stack;
  Label next = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] == 0 || out[i] != 0) continue;
    ++next;
    out[i] = next;
    stack.push_back(i);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      for_each_neighbour(p / w, p % w, h, w, conn, [&](std::size_t nr, std::size_t nc) {
        const std::size_t q = nr * w + nc;
        if (mask[q] != 0 && out[q] == 0) {
          out[q] = next;
          stack.push_back(q);
        }
      });
    }
  }
  return out;
}

struct BoundingBox {
  std::size_t r0;
  std::size_t c0;
  std::size_t r1;  // inclusive
  std::size_t c1;  // inclusive
};

struct Point {
  double row;
  double col;
};

struct InstanceStats {
  Label label;
  std::size_t area;
  Point centroid;
  BoundingBox bbox;
};

/// One entry per positive label present, ordered by label. The centroid is
/// the unweighted mean of the member pixel coordinates.
inline std::vector<InstanceStats> instance_stats(const InstanceMap& im) {
  struct Accum {
    std::size_t area = 0;
    double sum_r = 0.0;
    double sum_c = 0.0;
    BoundingBox bbox{std::numeric_limits<std::size_t>::max(),
                     std::numeric_limits<std::size_t>::max(), 0, 0};
  };
  std::unordered_map<Label, Accum> acc;
  for (std::size_t r = 0; r < im.height(); ++r) {
    for (std::size_t c = 0; c < im.width(); ++c) {
      const Label l = im(r, c);
      if (l == 0) continue;
      auto& a = acc[l];
      ++a.area;
      a.sum_r += static_cast<double>(r);
      a.sum_c += static_cast<double>(c);
      a.bbox.r0 = std::min(a.bbox.r0, r);
      a.bbox.c0 = std::min(a.bbox.c0, c);
      a.bbox.r1 = std::max(a.bbox.r1, r);
      a.bbox.c1 = std::max(a.bbox.c1, c);
    }
  }
  std::vector<InstanceStats> out;
  out.reserve(acc.size());
  for (const auto& [label, a] : acc) {
    const auto n = static_cast<double>(a.area);
    out.push_back({label, a.area, {a.sum_r / n, a.sum_c / n}, a.bbox});
  }
  std::sort(out.begin(), out.end(),
            [](const InstanceStats& x, const InstanceStats& y) { return x.label < y.label; });
  return out;
}

/// Largest label present (0 for an empty map).
inline Label max_label(const InstanceMap& im) {
  Label m = 0;
  for (Label l : im) m = std::max(m, l);
  return m;
}

/// Remaps labels to 1..N in raster order of first appearance.
inline InstanceMap relabel_sequential(const InstanceMap& im) {
  std::unordered_map<Label, Label> remap;
  InstanceMap out(im.height(), im.width(), 0);
  Label next = 0;
  for (std::size_t i = 0; i < im.size(); ++i) {
    const Label l = im[i];
    if (l == 0) continue;
    auto [it, inserted] = remap.try_emplace(l, next + 1);
    if (inserted) ++next;
    out[i] = it->second;
  }
  return out;
}

/// Drops instances with fewer than min_area pixels and resequences the rest.
/// min_area == 0 returns the map untouched.
inline InstanceMap remove_small_instances(const InstanceMap& im, std::size_t min_area) {
  if (min_area == 0) return im;
  std::unordered_map<Label, std::size_t> area;
  for (Label l : im) {
    if (l != 0) ++area[l];
  }
  InstanceMap kept = im;
  for (auto& l : kept) {
    if (l != 0 && area[l] < min_area) l = 0;
  }
  return relabel_sequential(kept);
}

/// Number of distinct positive labels.
inline std::size_t instance_count(const InstanceMap& im) {
  std::unordered_set<Label> seen;
  for (Label l : im) {
    if (l != 0) seen.insert(l);
  }
  return seen.size();
}

}  // namespace hovernet
