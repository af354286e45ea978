#pragma once

// Color-coded Gaussian head maps. Each visible candidate is a 2D Gaussian
// whose center is the face center and whose sigma is half the face width,
// both in normalized frame coordinates. Channels: R = subject, G = object,
// B = every other candidate. A self map H_i is the pair map H_ii.

#include "unicon/ingest.hpp"

#include <span>
#include <string>
#include <vector>

namespace unicon::headmap {

inline constexpr int kMapSize = 64;
inline constexpr int kMapPixels = kMapSize * kMapSize;

struct GaussianSpec {
  double cx = 0.5;
  double cy = 0.5;
  double radius = 0.1;
};

GaussianSpec spec_from_box(const ingest::BoundingBox& box);

struct HeadMap {
  int subject = 0;
  int object = 0;
  std::vector<float> pixels;  // planar CHW, [3, 64, 64], values in [0, 1]

  bool is_self() const { return subject == object; }
  float at(int channel, int x, int y) const {
    return pixels[static_cast<std::size_t>(channel) * kMapPixels + static_cast<std::size_t>(y) * kMapSize + x];
  }
};

// exp(-d^2 / (2 sigma^2)) sampled at pixel centers, row-major [64, 64].
// Throws InputError for a non-positive radius or a center outside [0,1]^2.
std::vector<float> render_gaussian(const GaussianSpec& spec);

HeadMap build_pair_map(int i, int j, std::span<const GaussianSpec> specs);
HeadMap build_self_map(int i, std::span<const GaussianSpec> specs);

// Writes an RGB PNG of the map (debug output).
void write_png(const HeadMap& map, const std::string& path);

}  // namespace unicon::headmap
