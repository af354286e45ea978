#include "unicon/headmap.hpp"

#include "unicon/error.hpp"

#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>

namespace unicon::headmap {

GaussianSpec spec_from_box(const ingest::BoundingBox& box) {
  return {std::clamp(box.center_x(), 0.0, 1.0), std::clamp(box.center_y(), 0.0, 1.0),
          std::max(0.5 * box.width(), 1e-4)};
}

std::vector<float> render_gaussian(const GaussianSpec& spec) {
  if (!(spec.radius > 0.0)) throw InputError("render_gaussian: radius must be positive");
  if (spec.cx < 0.0 || spec.cx > 1.0 || spec.cy < 0.0 || spec.cy > 1.0) {
    throw InputError("render_gaussian: center outside [0,1]^2");
  }
  std::vector<float> out(kMapPixels);
  const double inv = 1.0 / (2.0 * spec.radius * spec.radius);
  for (int y = 0; y < kMapSize; ++y) {
    const double dy = (y + 0.5) / kMapSize - spec.cy;
    for (int x = 0; x < kMapSize; ++x) {
      const double dx = (x + 0.5) / kMapSize - spec.cx;
      out[static_cast<std::size_t>(y) * kMapSize + x] = static_cast<float>(std::exp(-(dx * dx + dy * dy) * inv));
    }
  }
  return out;
}

HeadMap build_pair_map(int i, int j, std::span<const GaussianSpec> specs) {
  const int n = static_cast<int>(specs.size());
  if (i < 0 || i >= n || j < 0 || j >= n) throw InputError("head map: candidate index out of range");
  HeadMap map;
  map.subject = i;
  map.object = j;
  map.pixels.assign(3 * kMapPixels, 0.0f);
  const auto subject = render_gaussian(specs[i]);
  const auto object = i == j ? subject : render_gaussian(specs[j]);
  std::copy(subject.begin(), subject.end(), map.pixels.begin());
  std::copy(object.begin(), object.end(), map.pixels.begin() + kMapPixels);
  float* context = map.pixels.data() + 2 * kMapPixels;
  for (int k = 0; k < n; ++k) {
    if (k == i || k == j) continue;
    const auto g = render_gaussian(specs[k]);
    for (int p = 0; p < kMapPixels; ++p) context[p] = std::max(context[p], g[p]);
  }
  return map;
}

HeadMap build_self_map(int i, std::span<const GaussianSpec> specs) { return build_pair_map(i, i, specs); }

void write_png(const HeadMap& map, const std::string& path) {
  cv::Mat img(kMapSize, kMapSize, CV_8UC3);
  for (int y = 0; y < kMapSize; ++y) {
    for (int x = 0; x < kMapSize; ++x) {
      auto& px = img.at<cv::Vec3b>(y, x);
      // OpenCV stores BGR.
      for (int c = 0; c < 3; ++c) {
        px[2 - c] = static_cast<std::uint8_t>(std::lround(std::clamp(map.at(c, x, y), 0.0f, 1.0f) * 255.0f));
      }
    }
  }
  if (!cv::imwrite(path, img)) throw RuntimeFailure("failed to write head map PNG: " + path);
}

}  // namespace unicon::headmap
