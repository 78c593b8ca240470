#pragma once

// Image-quality and cross-view consistency metrics. Images are [3, H, W] RGB
// or [H, W] grey tensors with values in [0, 1].

#include <cstdint>
#include <span>
#include <vector>

#include "mvc/camera.hpp"
#include "mvc/tensor.hpp"

namespace mvc {

// 10 log10(peak^2 / MSE); +inf when the images are identical.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

// Rec. 601 luma of a clamped image, returned as [H, W].
Tensor luma(const Tensor& image);

struct SsimConfig {
    int64_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double range = 1.0;
};

// Normalised Gaussian taps of length `size`, centred at (size - 1) / 2.
std::vector<double> gaussian_window(int64_t size, double sigma);

// Mean over all fully contained windows (no padding); exactly 1 for
// identical images.
double ssim(const Tensor& a, const Tensor& b, const SsimConfig& config = {});

// Five scales with 2x average pooling in between. Scales too small for the
// window use a window as large as the image (same sigma). Negative
// contrast-structure terms are clamped to zero before the weighted product.
// Identical images score exactly 1.
double ms_ssim(const Tensor& a, const Tensor& b, const SsimConfig& config = {});

inline constexpr double kMsSsimWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

struct ReprojectionResult {
    double rmse = 0.0;
    int64_t samples = 0;        // compared pixels, each contributing 3 (or 1) channel residuals
    int64_t pairs_used = 0;
    int64_t pairs_skipped = 0;  // ordered pairs without a mutually visible pixel
};

// For each ordered pair (i, j), i != j: foreground pixels of view i are lifted
// with view i's depth, projected into view j and compared with the bilinear
// sample of image j. A pixel counts when its projection lands inside view j,
// all four depth neighbours are finite and the interpolated depth agrees with
// the projected depth within `tau`.
ReprojectionResult reprojection_consistency(std::span<const Tensor> images, std::span<const Tensor> depths,
                                            std::span<const CameraPose> poses, double tau = 0.01);

}  // namespace mvc
