#pragma once

// Seeded synthetic nuclei scenes for self-contained testing.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "hovernet/core.hpp"
#include "hovernet/targetgen.hpp"

namespace hovernet {

struct SynthConfig {
  std::size_t height = 256;
  std::size_t width = 256;
  std::size_t count = 30;
  double radius_min = 6.0;
  double radius_max = 11.0;
  double overlap = 0.15;  // max fraction of a new nucleus that may fall on earlier ones
  int classes = 4;
  std::uint64_t seed = 0;
  std::size_t max_retries = 2000;

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::invalid_argument, m); };
    if (height == 0 || width == 0) fail("synthetic scene needs a non-empty image");
    if (!(radius_min > 0.0) || radius_max < radius_min) fail("invalid radius range");
    if (overlap < 0.0 || overlap >= 1.0) fail("overlap fraction must lie in [0,1)");
    if (classes < 1) fail("at least one nucleus class is required");
  }
};

struct SynthScene {
  InstanceMap instances;
  TypeMap types;
  TypeAssignment type_of;
  std::vector<InstanceStats> stats;
};

namespace detail {

/// Engine output mapped to doubles by hand so scenes do not depend on the
/// standard library's distribution implementations.
class SceneRng {
 public:
  explicit SceneRng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::int64_t integer(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<double>(hi - lo + 1);
    return lo + std::min(static_cast<std::int64_t>(uniform() * span), hi - lo);
  }

 private:
  std::mt19937_64 engine_;
};

inline bool is_connected(const std::vector<std::size_t>& pixels, std::size_t h, std::size_t w) {
  if (pixels.empty()) return false;
  BinaryMask m(h, w, 0);
  for (auto p : pixels) m[p] = 1;
  std::size_t reached = 1;
  std::vector<std::size_t> stack{pixels.front()};
  m[pixels.front()] = 2;
  while (!stack.empty()) {
    const std::size_t p = stack.back();
    stack.pop_back();
    for_each_neighbour(p / w, p % w, h, w, Connectivity::eight, [&](std::size_t r, std::size_t c) {
      const std::size_t q = r * w + c;
      if (m[q] == 1) {
        m[q] = 2;
        ++reached;
        stack.push_back(q);
      }
    });
  }
  return reached == pixels.size();
}

}  // namespace detail

/// Rasterizes cfg.count random ellipses. A later nucleus may cover up to
/// cfg.overlap of its pixels with earlier ones; those pixels stay with the
/// earlier nucleus. Placements whose remaining pixels are disconnected or
/// smaller than half the ellipse area are redrawn.
inline SynthScene synth_scene(const SynthConfig& cfg) {
  cfg.validate();
  detail::SceneRng rng(cfg.seed);
  InstanceMap im(cfg.height, cfg.width, 0);
  TypeAssignment type_of;
  const auto h = static_cast<std::ptrdiff_t>(cfg.height);
  const auto w = static_cast<std::ptrdiff_t>(cfg.width);

  for (std::size_t n = 0; n < cfg.count; ++n) {
    const auto label = static_cast<Label>(n + 1);
    bool placed = false;
    for (std::size_t attempt = 0; attempt < cfg.max_retries && !placed; ++attempt) {
      const double cy = rng.uniform(0.0, static_cast<double>(cfg.height));
      const double cx = rng.uniform(0.0, static_cast<double>(cfg.width));
      const double a = rng.uniform(cfg.radius_min, cfg.radius_max);
      const double b = rng.uniform(cfg.radius_min, cfg.radius_max);
      const double theta = rng.uniform(0.0, std::numbers::pi);
      const double ct = std::cos(theta);
      const double st = std::sin(theta);
      const auto reach = static_cast<std::ptrdiff_t>(std::ceil(std::max(a, b))) + 1;
      const auto ry = static_cast<std::ptrdiff_t>(std::floor(cy));
      const auto rx = static_cast<std::ptrdiff_t>(std::floor(cx));

      std::vector<std::size_t> free;
      std::size_t covered = 0;
      std::size_t contested = 0;
      for (std::ptrdiff_t r = std::max<std::ptrdiff_t>(0, ry - reach);
           r <= std::min(h - 1, ry + reach); ++r) {
        for (std::ptrdiff_t c = std::max<std::ptrdiff_t>(0, rx - reach);
             c <= std::min(w - 1, rx + reach); ++c) {
          const double dy = static_cast<double>(r) + 0.5 - cy;
          const double dx = static_cast<double>(c) + 0.5 - cx;
          const double u = (dx * ct + dy * st) / a;
          const double v = (-dx * st + dy * ct) / b;
          if (u * u + v * v > 1.0) continue;
          const auto idx = static_cast<std::size_t>(r * w + c);
          ++covered;
          if (im[idx] != 0) {
            ++contested;
          } else {
            free.push_back(idx);
          }
        }
      }
      if (covered == 0) continue;
      if (static_cast<double>(contested) > cfg.overlap * static_cast<double>(covered)) continue;
      if (static_cast<double>(free.size()) < 0.5 * std::numbers::pi * a * b) continue;
      if (!detail::is_connected(free, cfg.height, cfg.width)) continue;
      for (auto idx : free) im[idx] = label;
      placed = true;
    }
    if (!placed) {
      throw Error(ErrorKind::placement_failure,
                  "could not place nucleus " + std::to_string(n + 1) + " of " +
                      std::to_string(cfg.count) + " after " + std::to_string(cfg.max_retries) +
                      " attempts");
    }
    type_of[label] = static_cast<ClassId>(rng.integer(1, cfg.classes));
  }
  TypeMap types = type_target(im, type_of);
  auto stats = instance_stats(im);
  return {std::move(im), std::move(types), std::move(type_of), std::move(stats)};
}

}  // namespace hovernet
