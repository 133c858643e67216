#include <gtest/gtest.h>

#include <random>

#include "hovernet/tiling.hpp"

namespace hovernet {
namespace {

GridStack random_image(std::mt19937_64& rng, std::size_t h, std::size_t w, std::size_t channels) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  GridStack img(channels, RealGrid(h, w, 0.0));
  for (auto& ch : img)
    for (auto& v : ch) v = u(rng);
  return img;
}

std::vector<TileOutput> identity_network(const GridStack& img, const TilePlan& plan) {
  std::vector<TileOutput> outs;
  for (const auto& t : plan.tiles) outs.push_back({t.index, crop_to_output(extract_tile(img, t), t)});
  return outs;
}

TEST(PlanTiles, SingleWindow) {
  const auto plan = plan_tiles(80, 80);
  ASSERT_EQ(plan.tiles.size(), 1u);
  EXPECT_EQ(plan.tiles[0].output, (Rect{0, 0, 80, 80}));
  EXPECT_EQ(plan.tiles[0].input, (Rect{-95, -95, 270, 270}));
  EXPECT_EQ(TileGeometry{}.margin(), 95u);
}

TEST(PlanTiles, ThousandSquare) {
  const auto plan = plan_tiles(1000, 1000);
  EXPECT_EQ(plan.tiles.size(), 169u);
  EXPECT_EQ(plan.rows, 13u);
  EXPECT_EQ(plan.tiles.back().output, (Rect{960, 960, 40, 40}));
}

TEST(PlanTiles, OnePixel) {
  const auto plan = plan_tiles(1, 1);
  ASSERT_EQ(plan.tiles.size(), 1u);
  EXPECT_EQ(plan.tiles[0].output, (Rect{0, 0, 1, 1}));
  EXPECT_EQ(plan.tiles[0].input, (Rect{-95, -95, 191, 191}));
  const GridStack img{RealGrid(1, 1, 0.25)};
  const auto window = extract_tile(img, plan.tiles[0]);
  for (double v : window[0]) EXPECT_EQ(v, 0.25);
}

TEST(PlanTiles, RejectsBadInput) {
  EXPECT_THROW(plan_tiles(0, 5), Error);
  EXPECT_THROW(plan_tiles(5, 5, {80, 80}), Error);
  EXPECT_THROW(plan_tiles(5, 5, {271, 80}), Error);
}

TEST(PlanTiles, CountSweep) {
  for (std::size_t w = 1; w <= 500; w += 7) {
    for (std::size_t h = 1; h <= 500; h += 11) {
      const auto plan = plan_tiles(w, h);
      EXPECT_EQ(plan.tiles.size(), ((w + 79) / 80) * ((h + 79) / 80));
    }
  }
}

TEST(PlanTiles, OutputsPartitionTheImage) {
  for (auto [w, h] : {std::pair<std::size_t, std::size_t>{1001, 733}, {81, 79}, {160, 1}}) {
    const auto plan = plan_tiles(w, h);
    std::vector<int> cover(w * h, 0);
    for (const auto& t : plan.tiles) {
      const auto m = static_cast<std::ptrdiff_t>(plan.geometry.margin());
      EXPECT_EQ(t.input, (Rect{t.output.row - m, t.output.col - m, t.output.height + 2 * plan.geometry.margin(),
                               t.output.width + 2 * plan.geometry.margin()}));
      for (std::size_t r = 0; r < t.output.height; ++r)
        for (std::size_t c = 0; c < t.output.width; ++c)
          ++cover[(static_cast<std::size_t>(t.output.row) + r) * w + static_cast<std::size_t>(t.output.col) + c];
    }
    for (int v : cover) ASSERT_EQ(v, 1);
  }
}

TEST(ExtractTile, InteriorIsPlainCrop) {
  std::mt19937_64 rng(1);
  const auto img = random_image(rng, 400, 400, 2);
  const auto plan = plan_tiles(400, 400);
  const auto& t = plan.tiles[2 * plan.cols + 2];  // output at (160,160), input from 65
  const auto win = extract_tile(img, t);
  for (std::size_t ch = 0; ch < 2; ++ch)
    for (std::size_t r = 0; r < 270; r += 13)
      for (std::size_t c = 0; c < 270; c += 17) EXPECT_EQ(win[ch](r, c), img[ch](65 + r, 65 + c));
}

TEST(ExtractTile, ConstantCorner) {
  const GridStack img{RealGrid(100, 120, 3.5)};
  const auto win = extract_tile(img, plan_tiles(120, 100).tiles[0]);
  for (double v : win[0]) EXPECT_EQ(v, 3.5);
}

TEST(ExtractTile, RampCornerMirrors) {
  RealGrid ramp(100, 100, 0.0);
  for (std::size_t r = 0; r < 100; ++r)
    for (std::size_t c = 0; c < 100; ++c) ramp(r, c) = static_cast<double>(c);
  const auto win = extract_tile({ramp}, plan_tiles(100, 100).tiles[0]);
  // window column j sits at image column j - 95; -1 -> 0, -5 -> 4, -95 -> 94
  EXPECT_EQ(win[0](0, 94), 0.0);
  EXPECT_EQ(win[0](10, 90), 4.0);
  EXPECT_EQ(win[0](200, 0), 94.0);
  EXPECT_EQ(win[0](0, 95), 0.0);
}

TEST(StitchMaps, SingleTileAndConstantPair) {
  std::mt19937_64 rng(2);
  const auto img = random_image(rng, 50, 60, 3);
  const auto plan = plan_tiles(60, 50);
  EXPECT_EQ(stitch_maps({{0, img}}, plan), img);

  const auto pair = plan_tiles(160, 80);
  ASSERT_EQ(pair.tiles.size(), 2u);
  const auto out = stitch_maps({{1, {RealGrid(80, 80, 1.0)}}, {0, {RealGrid(80, 80, 0.0)}}}, pair);
  for (std::size_t r = 0; r < 80; ++r) {
    for (std::size_t c = 0; c < 160; ++c) EXPECT_EQ(out[0](r, c), c < 80 ? 0.0 : 1.0);
  }
}

TEST(StitchMaps, RoundTripIsBitExact) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> dim(1, 300);
  for (int i = 0; i < 8; ++i) {
    const std::size_t h = dim(rng) | 1, w = dim(rng) | 1;
    const auto img = random_image(rng, h, w, 2);
    const auto plan = plan_tiles(w, h);
    EXPECT_EQ(stitch_maps(identity_network(img, plan), plan), img) << h << "x" << w;
  }
}

TEST(StitchMaps, MissingAndDuplicateTiles) {
  const auto plan = plan_tiles(160, 80);
  const GridStack block{RealGrid(80, 80, 0.0)};
  try {
    stitch_maps({{0, block}}, plan);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::missing_tile);
    EXPECT_NE(std::string(e.what()).find("tile 1"), std::string::npos);
  }
  try {
    stitch_maps({{0, block}, {1, block}, {1, block}}, plan);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::duplicate_tile);
    EXPECT_NE(std::string(e.what()).find("tile 1"), std::string::npos);
  }
  EXPECT_THROW(stitch_maps({{0, block}, {1, {RealGrid(80, 79, 0.0)}}}, plan), Error);
}

}  // namespace
}  // namespace hovernet
