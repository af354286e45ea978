#pragma once

// Static PNG figures for evaluation reports.

#include "unicon/metrics.hpp"

#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace unicon::plots {

// (recall, precision) after each prediction in descending score order.
std::vector<std::pair<double, double>> pr_curve(std::span<const metrics::ScoredFrame> frames);

void write_pr_curve(const std::filesystem::path& path, std::span<const metrics::ScoredFrame> frames);
// Grouped bars of AP per face-size bin and per faces-in-frame bin.
void write_breakdown(const std::filesystem::path& path, const metrics::Breakdown& breakdown);
// mAP against audio shift in frames.
void write_desync_curve(const std::filesystem::path& path, std::span<const metrics::DesyncPoint> points);

}  // namespace unicon::plots
