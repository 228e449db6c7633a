#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mghl/metrics.hpp"

namespace mghl {

struct CurveSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// out[i] = mean of v[max(0, i-window+1) .. i].
std::vector<double> trailing_mean(std::span<const double> v, std::size_t window);

/// Scaled extrinsic return plus every intrinsic component that was recorded,
/// each smoothed over `window` episodes and plotted against global step.
std::vector<CurveSeries> episode_curves(std::span<const EpisodeRecord> episodes, std::size_t window = 20);

void write_svg(std::ostream& out, const std::string& title, const std::string& x_label, const std::string& y_label,
               std::span<const CurveSeries> series);

}  // namespace mghl
