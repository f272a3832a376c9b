#include "ctlc/metrics.hpp"

#include <cmath>

namespace ctlc::metrics {

double mse(const Image& a, const Image& b) {
    require(a.same_shape(b), "mse: dimension mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

double psnr(const Image& a, const Image& b, double peak) {
    require(peak > 0.0, "psnr: peak must be positive");
    const double m = mse(a, b);
    if (m == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / m));
}

namespace {

constexpr int kWin = 11;

// 11-tap Gaussian, sigma 1.5, normalized
const std::vector<double>& gauss_taps() {
    static const std::vector<double> taps = [] {
        std::vector<double> t(kWin);
        double sum = 0.0;
        for (int i = 0; i < kWin; ++i) {
            const double d = i - (kWin - 1) / 2.0;
            t[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
            sum += t[i];
        }
        for (double& x : t) x /= sum;
        return t;
    }();
    return taps;
}

}  // namespace

double ssim(const Image& a, const Image& b, double peak) {
    require(a.same_shape(b), "ssim: dimension mismatch");
    require(a.height >= kWin && a.width >= kWin, "ssim: images smaller than the 11x11 window");
    require(peak > 0.0, "ssim: peak must be positive");
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    const auto& w = gauss_taps();
    const int oh = a.height - kWin + 1;
    const int ow = a.width - kWin + 1;

    // row sums kept per window row so the reduction order is fixed
    std::vector<double> row_sums(oh, 0.0);
#pragma omp parallel for schedule(static)
    for (int oy = 0; oy < oh; ++oy) {
        double acc = 0.0;
        for (int ox = 0; ox < ow; ++ox) {
            double ma = 0.0, mb = 0.0, sa = 0.0, sb = 0.0, sab = 0.0;
            for (int ky = 0; ky < kWin; ++ky) {
                const double* ra = a.data.data() + static_cast<size_t>(oy + ky) * a.width + ox;
                const double* rb = b.data.data() + static_cast<size_t>(oy + ky) * b.width + ox;
                const double wy = w[ky];
                for (int kx = 0; kx < kWin; ++kx) {
                    const double wxy = wy * w[kx];
                    ma += wxy * ra[kx];
                    mb += wxy * rb[kx];
                    sa += wxy * ra[kx] * ra[kx];
                    sb += wxy * rb[kx] * rb[kx];
                    sab += wxy * ra[kx] * rb[kx];
                }
            }
            const double va = sa - ma * ma;
            const double vb = sb - mb * mb;
            const double cab = sab - ma * mb;
            acc += ((2.0 * ma * mb + c1) * (2.0 * cab + c2)) /
                   ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        row_sums[oy] = acc;
    }
    double total = 0.0;
    for (double r : row_sums) total += r;
    return total / (static_cast<double>(oh) * ow);
}

MetricReport evaluate(const std::vector<Image>& recon, const std::vector<Image>& truth,
                      double peak) {
    require(recon.size() == truth.size() && !recon.empty(), "evaluate: batch mismatch");
    MetricReport r;
    r.psnr_db.reserve(recon.size());
    r.ssim.reserve(recon.size());
    for (size_t i = 0; i < recon.size(); ++i) {
        r.psnr_db.push_back(psnr(recon[i], truth[i], peak));
        r.ssim.push_back(ssim(recon[i], truth[i], peak));
    }
    for (double v : r.psnr_db) r.mean_psnr += v;
    for (double v : r.ssim) r.mean_ssim += v;
    r.mean_psnr /= static_cast<double>(recon.size());
    r.mean_ssim /= static_cast<double>(recon.size());
    return r;
}

}  // namespace ctlc::metrics
