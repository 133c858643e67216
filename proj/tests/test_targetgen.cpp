#include <gtest/gtest.h>

#include <random>

#include "hovernet/core.hpp"
#include "hovernet/synth.hpp"
#include "hovernet/targetgen.hpp"

namespace hovernet {
namespace {

TEST(HoverTargets, SinglePixelIsZero) {
  InstanceMap im(4, 4, 0);
  im(1, 2) = 1;
  const auto hv = hover_targets(im);
  EXPECT_EQ(hv.horizontal(1, 2), 0.0);
  EXPECT_EQ(hv.vertical(1, 2), 0.0);
}

TEST(HoverTargets, HorizontalBar) {
  InstanceMap im(2, 5, 0);
  for (std::size_t c = 0; c < 5; ++c) im(0, c) = 1;
  const auto hv = hover_targets(im);
  const double expected[] = {-1.0, -0.5, 0.0, 0.5, 1.0};
  for (std::size_t c = 0; c < 5; ++c) {
    EXPECT_DOUBLE_EQ(hv.horizontal(0, c), expected[c]);
    EXPECT_EQ(hv.vertical(0, c), 0.0);
    EXPECT_EQ(hv.horizontal(1, c), 0.0);
  }
}

TEST(HoverTargets, AsymmetricSidesNormalizedIndependently) {
  // columns 0..3, centroid col 1.5 rounds up to 2: offsets -2,-1,0,1
  InstanceMap im(1, 4, 1);
  const auto hv = hover_targets(im);
  EXPECT_DOUBLE_EQ(hv.horizontal(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(hv.horizontal(0, 1), -0.5);
  EXPECT_DOUBLE_EQ(hv.horizontal(0, 2), 0.0);
  EXPECT_DOUBLE_EQ(hv.horizontal(0, 3), 1.0);
}

TEST(HoverTargets, BackgroundIsZero) {
  const auto scene = synth_scene({.height = 64, .width = 64, .count = 6, .seed = 3});
  const auto hv = hover_targets(scene.instances);
  for (std::size_t i = 0; i < scene.instances.size(); ++i) {
    if (scene.instances[i] == 0) {
      EXPECT_EQ(hv.horizontal[i], 0.0);
      EXPECT_EQ(hv.vertical[i], 0.0);
    }
    EXPECT_LE(std::abs(hv.horizontal[i]), 1.0);
    EXPECT_LE(std::abs(hv.vertical[i]), 1.0);
  }
}

TEST(HoverTargets, SignAndSpanPerInstance) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto scene = synth_scene({.height = 80, .width = 80, .count = 8, .seed = seed});
    const auto& im = scene.instances;
    const auto hv = hover_targets(im);
    for (const auto& s : scene.stats) {
      const auto cr = static_cast<std::ptrdiff_t>(std::floor(s.centroid.row + 0.5));
      const auto cc = static_cast<std::ptrdiff_t>(std::floor(s.centroid.col + 0.5));
      double hmin = 0, hmax = 0, vmin = 0, vmax = 0;
      bool left = false, right = false, up = false, down = false;
      for (std::size_t r = 0; r < im.height(); ++r) {
        for (std::size_t c = 0; c < im.width(); ++c) {
          if (im(r, c) != s.label) continue;
          const auto dc = static_cast<std::ptrdiff_t>(c) - cc;
          const auto dr = static_cast<std::ptrdiff_t>(r) - cr;
          const double x = hv.horizontal(r, c);
          const double y = hv.vertical(r, c);
          if (dc < 0) {
            EXPECT_LT(x, 0.0);
          }
          if (dc > 0) {
            EXPECT_GT(x, 0.0);
          }
          if (dc == 0) {
            EXPECT_EQ(x, 0.0);
          }
          if (dr < 0) {
            EXPECT_LT(y, 0.0);
          }
          if (dr > 0) {
            EXPECT_GT(y, 0.0);
          }
          if (dr == 0) {
            EXPECT_EQ(y, 0.0);
          }
          left |= dc < 0;
          right |= dc > 0;
          up |= dr < 0;
          down |= dr > 0;
          hmin = std::min(hmin, x);
          hmax = std::max(hmax, x);
          vmin = std::min(vmin, y);
          vmax = std::max(vmax, y);
        }
      }
      if (left) {
        EXPECT_EQ(hmin, -1.0);
      }
      if (right) {
        EXPECT_EQ(hmax, 1.0);
      }
      if (up) {
        EXPECT_EQ(vmin, -1.0);
      }
      if (down) {
        EXPECT_EQ(vmax, 1.0);
      }
    }
  }
}

TEST(HoverTargets, TranslationEquivariant) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    InstanceMap im(20, 20, 0);
    for (std::size_t r = 0; r < 12; ++r)
      for (std::size_t c = 0; c < 12; ++c) im(r, c) = static_cast<Label>(rng() % 4);
    const std::size_t dr = rng() % 8;
    const std::size_t dc = rng() % 8;
    InstanceMap moved(20, 20, 0);
    for (std::size_t r = 0; r < 12; ++r)
      for (std::size_t c = 0; c < 12; ++c) moved(r + dr, c + dc) = im(r, c);
    const auto a = hover_targets(im);
    const auto b = hover_targets(moved);
    for (std::size_t r = 0; r < 12; ++r) {
      for (std::size_t c = 0; c < 12; ++c) {
        EXPECT_EQ(a.horizontal(r, c), b.horizontal(r + dr, c + dc));
        EXPECT_EQ(a.vertical(r, c), b.vertical(r + dr, c + dc));
      }
    }
  }
}

TEST(BinaryTarget, EmptyAndUnion) {
  EXPECT_EQ(binary_target(InstanceMap(3, 3, 0)), BinaryMask(3, 3, 0));
  const InstanceMap im(1, 4, std::vector<Label>{1, 0, 2, 2});
  EXPECT_EQ(binary_target(im), BinaryMask(1, 4, std::vector<std::uint8_t>{1, 0, 1, 1}));
}

TEST(BinaryTarget, PixelCountPreservedOnLargeMap) {
  InstanceMap im(1000, 1000, 0);
  std::size_t placed = 0;
  for (std::size_t c = 0; c < 100; ++c, ++placed) im(10, c) = 1;
  for (std::size_t c = 0; c < 100; ++c, ++placed) im(500, c + 300) = 2;
  for (std::size_t r = 0; r < 50; ++r, ++placed) im(r + 900, 999) = 3;
  const auto m = binary_target(im);
  std::size_t sum = 0;
  for (auto v : m) sum += v;
  EXPECT_EQ(sum, 250u);
  EXPECT_EQ(placed, 250u);
}

TEST(BinaryTarget, RoundTripThroughComponentsWhenNotTouching) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto scene = synth_scene({.height = 96, .width = 96, .count = 10, .seed = seed});
    const auto& im = scene.instances;
    bool touching = false;
    for (std::size_t r = 0; r < im.height(); ++r) {
      for (std::size_t c = 0; c < im.width(); ++c) {
        if (im(r, c) == 0) continue;
        for_each_neighbour(r, c, im.height(), im.width(), Connectivity::eight,
                           [&](std::size_t nr, std::size_t nc) {
                             touching |= im(nr, nc) != 0 && im(nr, nc) != im(r, c);
                           });
      }
    }
    if (touching) continue;
    EXPECT_EQ(connected_components(binary_target(im)), relabel_sequential(im));
  }
}

TEST(TypeTarget, EmptyMap) {
  EXPECT_EQ(type_target(InstanceMap(2, 2, 0), {}), TypeMap(2, 2, 0));
}

TEST(TypeTarget, AssignsClassPerInstance) {
  InstanceMap im(3, 3, 0);
  im(0, 0) = 1;
  im(1, 1) = 1;
  im(2, 2) = 2;
  im(2, 1) = 2;
  im(2, 0) = 2;
  const auto single = type_target(im, {{1, 3}, {2, 3}});
  EXPECT_EQ(single(1, 1), 3);
  const auto t = type_target(im, {{1, 2}, {2, 4}});
  std::map<ClassId, int> hist;
  for (auto v : t) ++hist[v];
  EXPECT_EQ(hist[2], 2);
  EXPECT_EQ(hist[4], 3);
  EXPECT_EQ(hist[0], 4);
}

TEST(TypeTarget, MissingLabelIsReported) {
  InstanceMap im(1, 2, std::vector<Label>{1, 7});
  try {
    type_target(im, {{1, 2}});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::missing_label);
    EXPECT_NE(std::string(e.what()).find("7"), std::string::npos);
  }
}

TEST(TypeTarget, RejectsBackgroundClassId) {
  InstanceMap im(1, 1, 1);
  EXPECT_THROW(type_target(im, {{1, 0}}), Error);
}

}  // namespace
}  // namespace hovernet
