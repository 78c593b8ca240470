#include "mvc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mvc/errors.hpp"

namespace mvc {

namespace {

struct Plane {
    int64_t h = 0, w = 0;
    std::vector<double> v;
    double at(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * w + c)]; }
};

Plane to_plane(const Tensor& t) {
    if (t.rank() != 2) throw ShapeError("expected a [H, W] plane, got " + shape_str(t.shape()));
    return {t.dim(0), t.dim(1), std::vector<double>(t.values().begin(), t.values().end())};
}

Plane multiply(const Plane& a, const Plane& b) {
    Plane out{a.h, a.w, std::vector<double>(a.v.size())};
    for (size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
    return out;
}

// Separable 'valid' filtering.
Plane filter_valid(const Plane& p, const std::vector<double>& taps_r, const std::vector<double>& taps_c) {
    const auto kr = static_cast<int64_t>(taps_r.size()), kc = static_cast<int64_t>(taps_c.size());
    const int64_t oh = p.h - kr + 1, ow = p.w - kc + 1;
    Plane rows{p.h, ow, std::vector<double>(static_cast<size_t>(p.h * ow))};
    for (int64_t r = 0; r < p.h; ++r)
        for (int64_t c = 0; c < ow; ++c) {
            double s = 0.0;
            for (int64_t k = 0; k < kc; ++k) s += taps_c[static_cast<size_t>(k)] * p.at(r, c + k);
            rows.v[static_cast<size_t>(r * ow + c)] = s;
        }
    Plane out{oh, ow, std::vector<double>(static_cast<size_t>(oh * ow))};
    for (int64_t r = 0; r < oh; ++r)
        for (int64_t c = 0; c < ow; ++c) {
            double s = 0.0;
            for (int64_t k = 0; k < kr; ++k) s += taps_r[static_cast<size_t>(k)] * rows.at(r + k, c);
            out.v[static_cast<size_t>(r * ow + c)] = s;
        }
    return out;
}

struct SsimTerms {
    double ssim = 0.0;  // mean of l * cs
    double cs = 0.0;    // mean of cs
};

SsimTerms ssim_terms(const Plane& a, const Plane& b, const SsimConfig& cfg, bool adaptive) {
    int64_t kr = cfg.window, kc = cfg.window;
    if (adaptive) {
        kr = std::min(kr, a.h);
        kc = std::min(kc, a.w);
    }
    if (a.h < kr || a.w < kc) {
        throw ValueError("image of " + std::to_string(a.h) + "x" + std::to_string(a.w) + " is smaller than the " +
                         std::to_string(cfg.window) + "x" + std::to_string(cfg.window) + " window");
    }
    const auto gr = gaussian_window(kr, cfg.sigma), gc = gaussian_window(kc, cfg.sigma);
    const Plane mu_a = filter_valid(a, gr, gc), mu_b = filter_valid(b, gr, gc);
    const Plane e_aa = filter_valid(multiply(a, a), gr, gc);
    const Plane e_bb = filter_valid(multiply(b, b), gr, gc);
    const Plane e_ab = filter_valid(multiply(a, b), gr, gc);
    const double c1 = (cfg.k1 * cfg.range) * (cfg.k1 * cfg.range);
    const double c2 = (cfg.k2 * cfg.range) * (cfg.k2 * cfg.range);
    double sum_ssim = 0.0, sum_cs = 0.0;
    for (size_t i = 0; i < mu_a.v.size(); ++i) {
        const double ma = mu_a.v[i], mb = mu_b.v[i];
        const double va = e_aa.v[i] - ma * ma, vb = e_bb.v[i] - mb * mb, cov = e_ab.v[i] - ma * mb;
        const double cs = (2.0 * cov + c2) / (va + vb + c2);
        const double l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        sum_ssim += l * cs;
        sum_cs += cs;
    }
    const auto n = static_cast<double>(mu_a.v.size());
    return {sum_ssim / n, sum_cs / n};
}

Plane pool2(const Plane& p) {
    Plane out{p.h / 2, p.w / 2, {}};
    out.v.resize(static_cast<size_t>(out.h * out.w));
    for (int64_t r = 0; r < out.h; ++r)
        for (int64_t c = 0; c < out.w; ++c) {
            out.v[static_cast<size_t>(r * out.w + c)] =
                0.25 * (p.at(2 * r, 2 * c) + p.at(2 * r, 2 * c + 1) + p.at(2 * r + 1, 2 * c) + p.at(2 * r + 1, 2 * c + 1));
        }
    return out;
}

void check_pair(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(what) + ": shapes differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

// Bilinear sample at (row v, col u) of one plane; the caller keeps
// (u, v) inside the image.
double bilinear(const double* data, int64_t h, int64_t w, double u, double v) {
    const auto x0 = static_cast<int64_t>(std::floor(u)), y0 = static_cast<int64_t>(std::floor(v));
    const int64_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
    const double fx = u - static_cast<double>(x0), fy = v - static_cast<double>(y0);
    const double top = (1.0 - fx) * data[y0 * w + x0] + fx * data[y0 * w + x1];
    const double bot = (1.0 - fx) * data[y1 * w + x0] + fx * data[y1 * w + x1];
    return (1.0 - fy) * top + fy * bot;
}

}  // namespace

namespace {

bool identical(const Tensor& a, const Tensor& b) {
    return std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b, double peak) {
    check_pair(a, b, "psnr");
    double sse = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double d = a[i] - b[i];
        sse += d * d;
    }
    if (sse == 0.0) return std::numeric_limits<double>::infinity();
    const double mse = sse / static_cast<double>(a.numel());
    return 10.0 * std::log10(peak * peak / mse);
}

Tensor luma(const Tensor& image) {
    if (image.rank() == 2) {
        std::vector<double> v(image.values().begin(), image.values().end());
        for (double& x : v) x = std::clamp(x, 0.0, 1.0);
        return Tensor(image.shape(), std::move(v));
    }
    if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("luma expects [3, H, W], got " + shape_str(image.shape()));
    const int64_t h = image.dim(1), w = image.dim(2), n = h * w;
    std::vector<double> v(static_cast<size_t>(n));
    const auto in = image.values();
    for (int64_t i = 0; i < n; ++i) {
        const double r = std::clamp(in[static_cast<size_t>(i)], 0.0, 1.0);
        const double g = std::clamp(in[static_cast<size_t>(n + i)], 0.0, 1.0);
        const double b = std::clamp(in[static_cast<size_t>(2 * n + i)], 0.0, 1.0);
        v[static_cast<size_t>(i)] = 0.299 * r + 0.587 * g + 0.114 * b;
    }
    return Tensor(Shape{h, w}, std::move(v));
}

std::vector<double> gaussian_window(int64_t size, double sigma) {
    if (size < 1 || sigma <= 0.0) throw ValueError("gaussian window needs size >= 1 and sigma > 0");
    std::vector<double> g(static_cast<size_t>(size));
    const double centre = 0.5 * static_cast<double>(size - 1);
    double total = 0.0;
    for (int64_t i = 0; i < size; ++i) {
        const double d = static_cast<double>(i) - centre;
        g[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        total += g[static_cast<size_t>(i)];
    }
    for (double& x : g) x /= total;
    return g;
}

double ssim(const Tensor& a, const Tensor& b, const SsimConfig& config) {
    check_pair(a, b, "ssim");
    const double v = ssim_terms(to_plane(luma(a)), to_plane(luma(b)), config, false).ssim;
    return identical(a, b) ? 1.0 : v;
}

double ms_ssim(const Tensor& a, const Tensor& b, const SsimConfig& config) {
    check_pair(a, b, "ms_ssim");
    Plane pa = to_plane(luma(a)), pb = to_plane(luma(b));
    if (pa.h % 16 || pa.w % 16) {
        throw ValueError("ms_ssim needs extents divisible by 16 for five scales, got " + shape_str(a.shape()));
    }
    if (identical(a, b)) return 1.0;
    double score = 1.0;
    for (int s = 0; s < 5; ++s) {
        const SsimTerms t = ssim_terms(pa, pb, config, true);
        const double term = s == 4 ? t.ssim : t.cs;
        score *= std::pow(std::max(term, 0.0), kMsSsimWeights[s]);
        if (s < 4) {
            pa = pool2(pa);
            pb = pool2(pb);
        }
    }
    return score;
}

ReprojectionResult reprojection_consistency(std::span<const Tensor> images, std::span<const Tensor> depths,
                                            std::span<const CameraPose> poses, double tau) {
    const size_t n = images.size();
    if (depths.size() != n || poses.size() != n) throw ShapeError("reprojection: one depth map and pose per image");
    if (n == 0) throw ValueError("reprojection: no views");
    const Shape& shape = images[0].shape();
    const int64_t ch = shape.size() == 3 ? shape[0] : 1;
    const int64_t h = shape[shape.size() - 2], w = shape[shape.size() - 1];
    for (size_t i = 0; i < n; ++i) {
        if (images[i].shape() != shape) throw ShapeError("reprojection: images must share one shape");
        if (depths[i].shape() != Shape{h, w}) throw ShapeError("reprojection: depth maps must be [H, W]");
        if (poses[i].intrinsics.height != h || poses[i].intrinsics.width != w) {
            throw ShapeError("reprojection: pose intrinsics disagree with the image extent");
        }
    }
    std::vector<RigidTransform> xf;
    for (const CameraPose& p : poses) xf.push_back(pose_to_transform(p));

    ReprojectionResult out;
    long double sse = 0.0L;
    for (size_t i = 0; i < n; ++i) {
        const double* di = depths[i].values().data();
        const double* ii = images[i].values().data();
        for (size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double* dj = depths[j].values().data();
            const double* ij = images[j].values().data();
            int64_t used = 0;
            long double pair_sse = 0.0L;
            for (int64_t r = 0; r < h; ++r)
                for (int64_t c = 0; c < w; ++c) {
                    const double d = di[r * w + c];
                    if (!std::isfinite(d)) continue;
                    const Vec3 x = unproject(static_cast<double>(c), static_cast<double>(r), d, poses[i], xf[i]);
                    const Projection pr = project(x, poses[j], xf[j]);
                    if (!pr.valid || pr.u < 0.0 || pr.v < 0.0 || pr.u > static_cast<double>(w - 1) ||
                        pr.v > static_cast<double>(h - 1)) {
                        continue;
                    }
                    const auto x0 = static_cast<int64_t>(std::floor(pr.u)), y0 = static_cast<int64_t>(std::floor(pr.v));
                    const int64_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
                    if (!std::isfinite(dj[y0 * w + x0]) || !std::isfinite(dj[y0 * w + x1]) ||
                        !std::isfinite(dj[y1 * w + x0]) || !std::isfinite(dj[y1 * w + x1])) {
                        continue;
                    }
                    if (std::abs(bilinear(dj, h, w, pr.u, pr.v) - pr.depth) > tau) continue;
                    ++used;
                    for (int64_t k = 0; k < ch; ++k) {
                        const double e = ii[k * h * w + r * w + c] - bilinear(ij + k * h * w, h, w, pr.u, pr.v);
                        pair_sse += static_cast<long double>(e) * e;
                    }
                }
            if (used == 0) {
                ++out.pairs_skipped;
                continue;
            }
            ++out.pairs_used;
            out.samples += used;
            sse += pair_sse;
        }
    }
    if (out.samples > 0) out.rmse = static_cast<double>(std::sqrt(sse / static_cast<long double>(out.samples * ch)));
    return out;
}

}  // namespace mvc
