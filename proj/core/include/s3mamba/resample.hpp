#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "s3mamba/image.hpp"

namespace s3 {

/// Keys cubic convolution kernel with parameter a (support [-2, 2]).
double keys_kernel(double x, double a = -0.5);

/// Source taps of one output sample along one axis: (source index, weight).
/// Weights are normalized to sum to one; indices are already clamped
/// (replicate boundary) and merged.
using AxisTaps = std::vector<std::pair<std::size_t, double>>;

/// src = (dst + 0.5) * in / out - 0.5. When downscaling the kernel is
/// stretched by in / out.
std::vector<AxisTaps> resample_taps(std::size_t in, std::size_t out);

/// Separable Keys (a = -0.5) resampling. Output is clamped to [0, 1] unless
/// clamp_output is false.
Image bicubic_resample(const Image& img, std::size_t out_h, std::size_t out_w, bool clamp_output = true);

/// Unstretched bicubic interpolation at continuous pixel position (y, x),
/// where integer positions are pixel centers. Replicate boundary, no clamp.
double bicubic_point(const Image& img, std::size_t channel, double y, double x);

}  // namespace s3
