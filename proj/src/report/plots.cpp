#include "unicon/plots.hpp"

#include "unicon/error.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <string>

namespace unicon::plots {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 480;
constexpr int kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;

const cv::Scalar kBlack(0, 0, 0);
const cv::Scalar kGrid(220, 220, 220);
const cv::Scalar kBlue(180, 90, 30);
const cv::Scalar kOrange(30, 130, 240);

struct Axes {
  cv::Mat img{kHeight, kWidth, CV_8UC3, cv::Scalar(255, 255, 255)};
  double x0, x1, y0, y1;

  Axes(double xa, double xb, double ya, double yb) : x0(xa), x1(xb), y0(ya), y1(yb) {}

  cv::Point at(double x, double y) const {
    const double u = (x - x0) / (x1 - x0), v = (y - y0) / (y1 - y0);
    return {kLeft + static_cast<int>(u * (kWidth - kLeft - kRight)),
            kHeight - kBottom - static_cast<int>(v * (kHeight - kTop - kBottom))};
  }

  void text(const std::string& s, cv::Point p, double scale = 0.45) const {
    cv::putText(const_cast<cv::Mat&>(img), s, p, cv::FONT_HERSHEY_SIMPLEX, scale, kBlack, 1, cv::LINE_AA);
  }

  void frame(const std::string& title, const std::string& xlabel, const std::string& ylabel, int xticks, int yticks) {
    char buf[32];
    for (int i = 0; i <= yticks; ++i) {
      const double y = y0 + (y1 - y0) * i / yticks;
      cv::line(img, at(x0, y), at(x1, y), kGrid, 1);
      std::snprintf(buf, sizeof buf, "%.3f", y);
      text(buf, at(x0, y) + cv::Point(-50, 4), 0.4);
    }
    for (int i = 0; xticks > 0 && i <= xticks; ++i) {
      const double x = x0 + (x1 - x0) * i / xticks;
      std::snprintf(buf, sizeof buf, "%g", x);
      text(buf, at(x, y0) + cv::Point(-8, 18), 0.4);
    }
    cv::rectangle(img, at(x0, y1), at(x1, y0), kBlack, 1);
    text(title, {kLeft, kTop - 14}, 0.6);
    text(xlabel, {kWidth / 2 - 30, kHeight - 15});
    text(ylabel, {8, kTop - 14});
  }

  void save(const std::filesystem::path& path) const {
    if (!cv::imwrite(path.string(), img)) throw RuntimeFailure("cannot write " + path.string());
  }
};

}  // namespace

std::vector<std::pair<double, double>> pr_curve(std::span<const metrics::ScoredFrame> frames) {
  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frames[a].score > frames[b].score; });
  std::size_t positives = 0;
  for (const auto& f : frames) positives += f.label != 0;
  std::vector<std::pair<double, double>> out;
  if (positives == 0) return out;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    tp += frames[order[k]].label != 0;
    out.emplace_back(static_cast<double>(tp) / positives, static_cast<double>(tp) / (k + 1));
  }
  return out;
}

void write_pr_curve(const std::filesystem::path& path, std::span<const metrics::ScoredFrame> frames) {
  Axes ax(0, 1, 0, 1);
  ax.frame("Precision-recall", "recall", "precision", 5, 5);
  const auto pts = pr_curve(frames);
  for (std::size_t k = 1; k < pts.size(); ++k) {
    cv::line(ax.img, ax.at(pts[k - 1].first, pts[k - 1].second), ax.at(pts[k].first, pts[k].second), kBlue, 2,
             cv::LINE_AA);
  }
  ax.save(path);
}

void write_breakdown(const std::filesystem::path& path, const metrics::Breakdown& breakdown) {
  std::vector<std::pair<std::string, const metrics::BinResult*>> bars;
  for (const auto& b : breakdown.face_size) bars.emplace_back("size:" + b.name, &b);
  for (const auto& b : breakdown.faces_in_frame) bars.emplace_back("faces:" + b.name, &b);
  Axes ax(0, static_cast<double>(std::max<std::size_t>(bars.size(), 1)), 0, 1);
  ax.frame("AP by face size and faces per frame", "", "AP", 0, 5);
  const double slot = 1.0;
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const auto* bin = bars[i].second;
    const double xa = i * slot + 0.15, xb = i * slot + 0.85;
    const auto& colour = i < breakdown.face_size.size() ? kBlue : kOrange;
    if (bin->ap) cv::rectangle(ax.img, ax.at(xa, *bin->ap), ax.at(xb, 0), colour, cv::FILLED);
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s", bin->ap ? std::to_string(*bin->ap).substr(0, 5).c_str() : "n/a");
    ax.text(buf, ax.at(xa, bin->ap ? *bin->ap : 0) + cv::Point(0, -6), 0.4);
    ax.text(bars[i].first, ax.at(xa, 0) + cv::Point(0, 36), 0.38);
  }
  ax.save(path);
}

void write_desync_curve(const std::filesystem::path& path, std::span<const metrics::DesyncPoint> points) {
  if (points.empty()) throw InputError("desync plot: no points");
  int lo = points.front().shift, hi = lo;
  double ymin = 1.0, ymax = 0.0;
  for (const auto& p : points) {
    lo = std::min(lo, p.shift);
    hi = std::max(hi, p.shift);
    ymin = std::min(ymin, p.map);
    ymax = std::max(ymax, p.map);
  }
  if (hi == lo) ++hi;
  const double pad = std::max(0.02, 0.1 * (ymax - ymin));
  Axes ax(lo, hi, std::max(0.0, ymin - pad), std::min(1.0, ymax + pad));
  ax.frame("mAP under audio shift", "shift (frames)", "mAP", std::min(10, hi - lo), 5);
  std::vector<metrics::DesyncPoint> sorted(points.begin(), points.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.shift < b.shift; });
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    const auto p = ax.at(sorted[k].shift, sorted[k].map);
    cv::circle(ax.img, p, 4, kBlue, cv::FILLED, cv::LINE_AA);
    if (k > 0) cv::line(ax.img, ax.at(sorted[k - 1].shift, sorted[k - 1].map), p, kBlue, 2, cv::LINE_AA);
  }
  ax.save(path);
}

}  // namespace unicon::plots
