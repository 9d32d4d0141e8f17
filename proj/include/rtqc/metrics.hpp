#pragma once

#include <cstdint>
#include <span>

#include "rtqc/video_io.hpp"

namespace rtqc {

/// PSNR reported when the two planes are identical (MSE = 0).
inline constexpr double kPsnrCapDb = 100.0;
inline constexpr double kPixelMax = 255.0;

/// Luma PSNR in dB, capped at kPsnrCapDb.
double psnr_plane(std::span<const std::uint8_t> ref, std::span<const std::uint8_t> dist);
double psnr_frame(const Frame& ref, const Frame& dist);
/// Arithmetic mean of per-frame PSNR.
double psnr_chunk(std::span<const Frame> refs, std::span<const Frame> dists);
double mean(std::span<const double> values);

/// 1 - max(0, actual - opt) / actual.
double bandwidth_efficiency(double b_actual, double b_opt);

/// Population standard deviation over mean.
double coefficient_of_variation(std::span<const double> values);

struct ConformanceVerdict {
  double chunk_psnr = 0.0;
  double lambda = 0.0;
  bool conforms = false;

  static ConformanceVerdict judge(double chunk_psnr, double lambda) {
    return {chunk_psnr, lambda, chunk_psnr >= lambda};
  }
};

double nonconformance_probability(std::span<const ConformanceVerdict> verdicts);

}  // namespace rtqc
