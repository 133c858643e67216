#include <gtest/gtest.h>

#include <random>

#include "hovernet/core.hpp"

namespace hovernet {
namespace {

BinaryMask mask_from(std::size_t h, std::size_t w, std::vector<std::uint8_t> v) {
  return BinaryMask(h, w, std::move(v));
}

TEST(ConnectedComponents, EmptyMaskHasNoInstances) {
  const BinaryMask m(5, 5, 0);
  const auto im = connected_components(m);
  EXPECT_EQ(instance_count(im), 0u);
  EXPECT_EQ(max_label(im), 0u);
}

TEST(ConnectedComponents, SingleBlock) {
  BinaryMask m(5, 5, 0);
  for (std::size_t r = 1; r < 4; ++r)
    for (std::size_t c = 1; c < 4; ++c) m(r, c) = 1;
  const auto im = connected_components(m);
  ASSERT_EQ(instance_count(im), 1u);
  const auto stats = instance_stats(im);
  EXPECT_EQ(stats[0].area, 9u);
}

TEST(ConnectedComponents, DiagonalTouchDependsOnConnectivity) {
  const auto m = mask_from(2, 2, {1, 0, 0, 1});
  EXPECT_EQ(instance_count(connected_components(m, Connectivity::eight)), 1u);
  EXPECT_EQ(instance_count(connected_components(m, Connectivity::four)), 2u);
}

TEST(ConnectedComponents, LabelsFollowRasterOrderOfFirstPixel) {
  // region B starts at (0,3), region A at (0,0); a U-shape joins late.
  const auto m = mask_from(3, 5, {1, 0, 0, 1, 1,  //
                                  1, 0, 0, 0, 0,  //
                                  1, 1, 1, 0, 1});
  const auto im = connected_components(m, Connectivity::four);
  EXPECT_EQ(im(0, 0), 1u);
  EXPECT_EQ(im(2, 2), 1u);
  EXPECT_EQ(im(0, 3), 2u);
  EXPECT_EQ(im(2, 4), 3u);
}

TEST(ConnectedComponents, PropertiesOnRandomMasks) {
  std::mt19937_64 rng(11);
  std::bernoulli_distribution coin(0.45);
  for (int trial = 0; trial < 200; ++trial) {
    BinaryMask m(1 + rng() % 17, 1 + rng() % 17, 0);
    for (auto& v : m) v = coin(rng) ? 1 : 0;
    const auto im8 = connected_components(m, Connectivity::eight);
    const auto im4 = connected_components(m, Connectivity::four);
    std::size_t fg = 0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      fg += m[i];
      EXPECT_EQ(m[i] != 0, im8[i] != 0);
      EXPECT_EQ(m[i] != 0, im4[i] != 0);
    }
    EXPECT_LE(instance_count(im8), instance_count(im4));
    std::size_t area = 0;
    for (const auto& s : instance_stats(im8)) area += s.area;
    EXPECT_EQ(area, fg);
    EXPECT_EQ(max_label(im8), instance_count(im8));
    // neighbouring foreground pixels share a label under 8-connectivity
    for (std::size_t r = 0; r < m.height(); ++r) {
      for (std::size_t c = 0; c < m.width(); ++c) {
        if (!m(r, c)) continue;
        for_each_neighbour(r, c, m.height(), m.width(), Connectivity::eight,
                           [&](std::size_t nr, std::size_t nc) {
                             if (m(nr, nc)) {
                               EXPECT_EQ(im8(r, c), im8(nr, nc));
                             }
                           });
      }
    }
  }
}

TEST(InstanceStats, SinglePixel) {
  InstanceMap im(5, 5, 0);
  im(2, 3) = 4;
  const auto s = instance_stats(im);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].label, 4u);
  EXPECT_EQ(s[0].area, 1u);
  EXPECT_DOUBLE_EQ(s[0].centroid.row, 2.0);
  EXPECT_DOUBLE_EQ(s[0].centroid.col, 3.0);
}

TEST(InstanceStats, HorizontalBar) {
  InstanceMap im(3, 5, 0);
  for (std::size_t c = 0; c < 5; ++c) im(0, c) = 1;
  const auto s = instance_stats(im);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].area, 5u);
  EXPECT_DOUBLE_EQ(s[0].centroid.row, 0.0);
  EXPECT_DOUBLE_EQ(s[0].centroid.col, 2.0);
  EXPECT_EQ(s[0].bbox.c0, 0u);
  EXPECT_EQ(s[0].bbox.c1, 4u);
}

TEST(InstanceStats, LShapeCentroid) {
  InstanceMap im(3, 3, 0);
  im(0, 0) = 1;
  im(1, 0) = 1;
  im(1, 1) = 1;
  const auto s = instance_stats(im);
  EXPECT_DOUBLE_EQ(s[0].centroid.row, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(s[0].centroid.col, 1.0 / 3.0);
}

TEST(InstanceStats, CentroidInsideBoundingBox) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    InstanceMap im(12, 12, 0);
    for (auto& v : im) v = static_cast<Label>(rng() % 4);
    for (const auto& s : instance_stats(im)) {
      EXPECT_GE(s.area, 1u);
      EXPECT_GE(s.centroid.row, static_cast<double>(s.bbox.r0));
      EXPECT_LE(s.centroid.row, static_cast<double>(s.bbox.r1));
      EXPECT_GE(s.centroid.col, static_cast<double>(s.bbox.c0));
      EXPECT_LE(s.centroid.col, static_cast<double>(s.bbox.c1));
      EXPECT_LT(s.bbox.r1, im.height());
      EXPECT_LT(s.bbox.c1, im.width());
    }
  }
}

TEST(RelabelSequential, CompactsLabels) {
  const InstanceMap im(1, 4, std::vector<Label>{0, 5, 9, 5});
  const auto out = relabel_sequential(im);
  EXPECT_EQ(out, InstanceMap(1, 4, std::vector<Label>{0, 1, 2, 1}));
}

TEST(RelabelSequential, IdentityOnSequentialMap) {
  const InstanceMap im(2, 3, std::vector<Label>{1, 1, 0, 2, 3, 3});
  EXPECT_EQ(relabel_sequential(im), im);
}

TEST(RelabelSequential, RasterOrderOfFirstAppearance) {
  const InstanceMap im(2, 2, std::vector<Label>{7, 0, 3, 7});
  const auto out = relabel_sequential(im);
  EXPECT_EQ(out(0, 0), 1u);
  EXPECT_EQ(out(1, 0), 2u);
  EXPECT_EQ(out(1, 1), 1u);
}

TEST(RelabelSequential, IdempotentAndPreservesPixelSets) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    InstanceMap im(6, 7, 0);
    for (auto& v : im) v = static_cast<Label>(rng() % 3 == 0 ? 0 : rng() % 50);
    const auto once = relabel_sequential(im);
    EXPECT_EQ(relabel_sequential(once), once);
    for (std::size_t i = 0; i < im.size(); ++i) {
      for (std::size_t j = 0; j < im.size(); ++j) {
        EXPECT_EQ(im[i] == im[j], once[i] == once[j]);
      }
      EXPECT_EQ(im[i] == 0, once[i] == 0);
    }
  }
}

TEST(RemoveSmallInstances, ZeroIsIdentity) {
  const InstanceMap im(1, 3, std::vector<Label>{4, 0, 2});
  EXPECT_EQ(remove_small_instances(im, 0), im);
}

TEST(RemoveSmallInstances, DropsEverythingBelowThreshold) {
  InstanceMap im(1, 5, 1);
  const auto out = remove_small_instances(im, 6);
  EXPECT_EQ(instance_count(out), 0u);
}

TEST(RemoveSmallInstances, KeepsLargeAndRelabels) {
  InstanceMap im(4, 5, 0);
  im(0, 0) = 1;
  im(0, 1) = 1;
  im(0, 2) = 1;
  for (std::size_t r = 2; r < 4; ++r)
    for (std::size_t c = 0; c < 5; ++c) im(r, c) = 2;
  const auto out = remove_small_instances(im, 5);
  EXPECT_EQ(instance_count(out), 1u);
  EXPECT_EQ(out(0, 0), 0u);
  EXPECT_EQ(out(2, 0), 1u);
}

TEST(Grid, RejectsDegenerateShapes) {
  EXPECT_THROW(RealGrid(0, 3), Error);
  EXPECT_THROW(RealGrid(2, 2, std::vector<double>{1.0}), Error);
}

TEST(Grid, ReflectIndexIsSymmetric) {
  EXPECT_EQ(reflect_index(-1, 4), 0u);
  EXPECT_EQ(reflect_index(-2, 4), 1u);
  EXPECT_EQ(reflect_index(4, 4), 3u);
  EXPECT_EQ(reflect_index(5, 4), 2u);
  EXPECT_EQ(reflect_index(-95, 1), 0u);
  EXPECT_EQ(reflect_index(9, 4), 1u);  // 9 -> period 8 -> 1
}

}  // namespace
}  // namespace hovernet
