#pragma once

// Tile planning for valid-convolution networks whose output window is
// smaller than their input window, and stitching of per-tile output maps
// back into whole-image maps.

#include <cstddef>
#include <set>
#include <utility>
#include <vector>

#include "hovernet/grid.hpp"

namespace hovernet {

struct TileGeometry {
  std::size_t input_size = 270;
  std::size_t output_size = 80;

  std::size_t margin() const { return (input_size - output_size) / 2; }

  void validate() const {
    if (output_size == 0 || input_size <= output_size) {
      throw Error(ErrorKind::invalid_argument, "tile input must be larger than a non-empty output");
    }
    if ((input_size - output_size) % 2 != 0) {
      throw Error(ErrorKind::invalid_argument, "tile input minus output must be even");
    }
  }
};

/// Rectangle with a possibly negative origin (input windows may hang over
/// the image border).
struct Rect {
  std::ptrdiff_t row;
  std::ptrdiff_t col;
  std::size_t height;
  std::size_t width;

  friend bool operator==(const Rect&, const Rect&) = default;
};

struct Tile {
  std::size_t index;
  std::size_t grid_row;
  std::size_t grid_col;
  Rect output;  // clipped to the image
  Rect input;   // output expanded by the margin on every side
};

struct TilePlan {
  std::size_t width;
  std::size_t height;
  TileGeometry geometry;
  std::size_t rows;
  std::size_t cols;
  std::vector<Tile> tiles;  // row-major over the tile grid
};

inline TilePlan plan_tiles(std::size_t width, std::size_t height, const TileGeometry& geom = {}) {
  geom.validate();
  if (width == 0 || height == 0) {
    throw Error(ErrorKind::invalid_argument, "image dimensions must be at least 1x1");
  }
  const std::size_t out = geom.output_size;
  const auto margin = static_cast<std::ptrdiff_t>(geom.margin());
  TilePlan plan{width, height, geom, (height + out - 1) / out, (width + out - 1) / out, {}};
  plan.tiles.reserve(plan.rows * plan.cols);
  for (std::size_t tr = 0; tr < plan.rows; ++tr) {
    for (std::size_t tc = 0; tc < plan.cols; ++tc) {
      const std::size_t r0 = tr * out;
      const std::size_t c0 = tc * out;
      const Rect output{static_cast<std::ptrdiff_t>(r0), static_cast<std::ptrdiff_t>(c0),
                        std::min(out, height - r0), std::min(out, width - c0)};
      const Rect input{output.row - margin, output.col - margin,
                       output.height + 2 * geom.margin(), output.width + 2 * geom.margin()};
      plan.tiles.push_back({plan.tiles.size(), tr, tc, output, input});
    }
  }
  return plan;
}

/// The tile's input window from every channel, reflecting indices that fall
/// outside the image.
inline GridStack extract_tile(const GridStack& image, const Tile& tile) {
  if (image.empty()) throw Error(ErrorKind::invalid_argument, "extract_tile: empty image stack");
  GridStack out;
  out.reserve(image.size());
  for (const auto& channel : image) {
    require_same_shape(image.front(), channel, "extract_tile: channel");
    RealGrid window(tile.input.height, tile.input.width, 0.0);
    for (std::size_t r = 0; r < tile.input.height; ++r) {
      const std::size_t sr =
          reflect_index(tile.input.row + static_cast<std::ptrdiff_t>(r), channel.height());
      for (std::size_t c = 0; c < tile.input.width; ++c) {
        const std::size_t sc =
            reflect_index(tile.input.col + static_cast<std::ptrdiff_t>(c), channel.width());
        window(r, c) = channel(sr, sc);
      }
    }
    out.push_back(std::move(window));
  }
  return out;
}

/// The centre of an input window that corresponds to the tile's output
/// rectangle; an identity "network".
inline GridStack crop_to_output(const GridStack& window, const Tile& tile) {
  const auto top = static_cast<std::size_t>(tile.output.row - tile.input.row);
  const auto left = static_cast<std::size_t>(tile.output.col - tile.input.col);
  GridStack out;
  for (const auto& g : window) {
    RealGrid o(tile.output.height, tile.output.width, 0.0);
    for (std::size_t r = 0; r < o.height(); ++r) {
      for (std::size_t c = 0; c < o.width(); ++c) o(r, c) = g(top + r, left + c);
    }
    out.push_back(std::move(o));
  }
  return out;
}

struct TileOutput {
  std::size_t tile_index;
  GridStack maps;
};

/// Places each tile's output maps at its output rectangle. Exactly one output
/// per planned tile is required; all outputs must have the same channel count.
inline GridStack stitch_maps(const std::vector<TileOutput>& outputs, const TilePlan& plan) {
  std::vector<const TileOutput*> by_tile(plan.tiles.size(), nullptr);
  for (const auto& o : outputs) {
    if (o.tile_index >= plan.tiles.size()) {
      throw Error(ErrorKind::invalid_argument,
                  "tile " + std::to_string(o.tile_index) + " is not part of the plan");
    }
    if (by_tile[o.tile_index] != nullptr) {
      throw Error(ErrorKind::duplicate_tile, "duplicate output for tile " +
                                                 std::to_string(o.tile_index));
    }
    by_tile[o.tile_index] = &o;
  }
  for (std::size_t i = 0; i < by_tile.size(); ++i) {
    if (by_tile[i] == nullptr) {
      throw Error(ErrorKind::missing_tile, "missing output for tile " + std::to_string(i));
    }
  }
  const std::size_t channels = by_tile.empty() ? 0 : by_tile.front()->maps.size();
  if (channels == 0) throw Error(ErrorKind::invalid_argument, "tile outputs have no channels");
  GridStack out(channels, RealGrid(plan.height, plan.width, 0.0));
  for (const auto& tile : plan.tiles) {
    const auto& maps = by_tile[tile.index]->maps;
    if (maps.size() != channels) {
      throw Error(ErrorKind::dimension_mismatch,
                  "tile " + std::to_string(tile.index) + " has " + std::to_string(maps.size()) +
                      " channels, expected " + std::to_string(channels));
    }
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const auto& m = maps[ch];
      if (m.height() != tile.output.height || m.width() != tile.output.width) {
        throw Error(ErrorKind::dimension_mismatch,
                    "tile " + std::to_string(tile.index) + " output is " +
                        std::to_string(m.height()) + "x" + std::to_string(m.width()) +
                        ", expected " + std::to_string(tile.output.height) + "x" +
                        std::to_string(tile.output.width));
      }
      const auto r0 = static_cast<std::size_t>(tile.output.row);
      const auto c0 = static_cast<std::size_t>(tile.output.col);
      for (std::size_t r = 0; r < m.height(); ++r) {
        for (std::size_t c = 0; c < m.width(); ++c) out[ch](r0 + r, c0 + c) = m(r, c);
      }
    }
  }
  return out;
}

}  // namespace hovernet
