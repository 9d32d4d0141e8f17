#include "rtqc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "rtqc/error.hpp"

namespace rtqc {

double psnr_plane(std::span<const std::uint8_t> ref, std::span<const std::uint8_t> dist) {
  if (ref.size() != dist.size() || ref.empty()) {
    throw InvalidArgumentError("psnr: plane sizes differ (" + std::to_string(ref.size()) + " vs " +
                               std::to_string(dist.size()) + ")");
  }
  std::uint64_t sse = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const int d = static_cast<int>(ref[i]) - static_cast<int>(dist[i]);
    sse += static_cast<std::uint64_t>(d * d);
  }
  if (sse == 0) {
    return kPsnrCapDb;
  }
  const double mse = static_cast<double>(sse) / static_cast<double>(ref.size());
  return std::min(kPsnrCapDb, 10.0 * std::log10(kPixelMax * kPixelMax / mse));
}

double psnr_frame(const Frame& ref, const Frame& dist) {
  if (ref.u_plane.size() != dist.u_plane.size() || ref.v_plane.size() != dist.v_plane.size()) {
    throw InvalidArgumentError("psnr: frame geometries differ");
  }
  return psnr_plane(ref.y_plane, dist.y_plane);
}

double mean(std::span<const double> values) {
  if (values.empty()) {
    throw InvalidArgumentError("mean of an empty sequence");
  }
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double psnr_chunk(std::span<const Frame> refs, std::span<const Frame> dists) {
  if (refs.size() != dists.size()) {
    throw InvalidArgumentError("psnr_chunk: " + std::to_string(refs.size()) + " reference frames vs " +
                               std::to_string(dists.size()) + " distorted");
  }
  if (refs.empty()) {
    throw InvalidArgumentError("psnr_chunk: no frames");
  }
  std::vector<double> per_frame;
  per_frame.reserve(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    per_frame.push_back(psnr_frame(refs[i], dists[i]));
  }
  return mean(per_frame);
}

double bandwidth_efficiency(double b_actual, double b_opt) {
  if (!(b_actual > 0.0)) {
    throw InvalidArgumentError("bandwidth_efficiency: actual bitrate must be positive");
  }
  if (b_opt < 0.0) {
    throw InvalidArgumentError("bandwidth_efficiency: optimal bitrate must be non-negative");
  }
  return 1.0 - std::max(0.0, b_actual - b_opt) / b_actual;
}

double coefficient_of_variation(std::span<const double> values) {
  if (values.size() < 2) {
    throw InvalidArgumentError("coefficient_of_variation needs at least two values");
  }
  const double m = mean(values);
  if (!(m > 0.0)) {
    throw InvalidArgumentError("coefficient_of_variation needs a positive mean");
  }
  double ss = 0.0;
  for (double v : values) {
    ss += (v - m) * (v - m);
  }
  return std::sqrt(ss / static_cast<double>(values.size())) / m;
}

double nonconformance_probability(std::span<const ConformanceVerdict> verdicts) {
  if (verdicts.empty()) {
    throw InvalidArgumentError("nonconformance_probability of an empty verdict list");
  }
  const auto bad = std::count_if(verdicts.begin(), verdicts.end(), [](const auto& v) { return !v.conforms; });
  return static_cast<double>(bad) / static_cast<double>(verdicts.size());
}

}  // namespace rtqc
