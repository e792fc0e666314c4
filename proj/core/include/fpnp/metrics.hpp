#pragma once

#include "fpnp/image.hpp"

namespace fpnp {

/// PSNR reported when the two images are identical.
inline constexpr double kPsnrCap = 100.0;

/// Mean squared error; the training loss.
double loss(const Image& x_hat, const Image& x);
/// d loss / d x_hat.
Image loss_gradient(const Image& x_hat, const Image& x);

/// 10 log10(peak^2 / MSE), capped at kPsnrCap.
double psnr(const Image& x, const Image& x_hat, double peak = 1.0);

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), k1 = 0.01,
/// k2 = 0.03 and dynamic range 1, averaged over valid window positions and
/// channels. The window shrinks to the largest odd size that fits images
/// smaller than 11 pixels.
double ssim(const Image& x, const Image& x_hat);

}  // namespace fpnp
