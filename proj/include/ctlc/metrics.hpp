#pragma once

#include <vector>

#include "ctlc/types.hpp"

namespace ctlc::metrics {

/// PSNR cap reported when the images are identical (MSE = 0).
constexpr double kPsnrCap = 99.0;

double mse(const Image& a, const Image& b);

/// 10*log10(peak^2 / MSE); identical images return the 99 dB cap.
double psnr(const Image& a, const Image& b, double peak = 1.0);

/// Mean structural similarity over sliding 11x11 Gaussian windows
/// (sigma = 1.5), C1 = (0.01*peak)^2, C2 = (0.03*peak)^2.
double ssim(const Image& a, const Image& b, double peak = 1.0);

/// Per-slice PSNR/SSIM plus their means.
struct MetricReport {
    std::vector<double> psnr_db;
    std::vector<double> ssim;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
};

MetricReport evaluate(const std::vector<Image>& recon, const std::vector<Image>& truth,
                      double peak = 1.0);

}  // namespace ctlc::metrics
