#include "mvc/volume.hpp"

#include <cmath>

#include "mvc/errors.hpp"
#include "mvc/ops.hpp"

namespace mvc {

namespace {

// (2 idx + 1 - R) b / R keeps the centre voxel of an odd grid exactly at 0.
double cell_center(int64_t idx, int64_t r, double b) {
    return static_cast<double>(2 * idx + 1 - r) * b / static_cast<double>(r);
}

double cell_coord(double p, int64_t r, double b) {
    return 0.5 * (p * static_cast<double>(r) / b + static_cast<double>(r - 1));
}

}  // namespace

Vec3 GridSpec::voxel_center(int64_t i, int64_t j, int64_t k) const {
    return Vec3(cell_center(i, resolution, half_extent), cell_center(j, resolution, half_extent),
                cell_center(k, resolution, half_extent));
}

Vec3 GridSpec::lattice_coord(const Vec3& p) const {
    return Vec3(cell_coord(p.x(), resolution, half_extent), cell_coord(p.y(), resolution, half_extent),
                cell_coord(p.z(), resolution, half_extent));
}

DepthRange grid_depth_range(double radius, const GridSpec& grid) {
    const double reach = grid.half_extent * std::sqrt(3.0);
    if (!(radius > reach)) throw ValueError("camera radius must exceed the grid's circumscribed radius");
    return {radius - reach, radius + reach};
}

std::vector<double> frustum_depths(double d_near, double d_far, int64_t count) {
    if (!(d_near > 0.0) || !(d_far > d_near)) throw ValueError("frustum depths need 0 < near < far");
    if (count < 2) throw ValueError("frustum needs at least two depth samples");
    std::vector<double> d(static_cast<size_t>(count));
    const double step = (d_far - d_near) / static_cast<double>(count - 1);
    for (int64_t i = 0; i < count; ++i) d[static_cast<size_t>(i)] = d_near + step * static_cast<double>(i);
    d.back() = d_far;
    return d;
}

Tensor pos_encode(const Tensor& x, int64_t n_freq) {
    if (n_freq < 1) throw ValueError("pos_encode needs n_freq >= 1");
    const Shape& s = x.shape();
    const int64_t c = s[0];
    const int64_t inner = x.numel() / c;
    Shape out_shape = s;
    out_shape[0] = c * 2 * n_freq;
    std::vector<double> out(static_cast<size_t>(x.numel() * 2 * n_freq));
    const auto v = x.values();
    for (int64_t ch = 0; ch < c; ++ch) {
        for (int64_t f = 0; f < n_freq; ++f) {
            const double w = std::ldexp(M_PI, static_cast<int>(f));
            double* sin_row = out.data() + ((ch * n_freq + f) * 2) * inner;
            double* cos_row = sin_row + inner;
            for (int64_t i = 0; i < inner; ++i) {
                const double a = w * v[static_cast<size_t>(ch * inner + i)];
                sin_row[i] = std::sin(a);
                cos_row[i] = std::cos(a);
            }
        }
    }
    return Tensor(std::move(out_shape), std::move(out));
}

Tensor camera_param_volume(const CameraPose& pose, const GridSpec& grid) {
    const RigidTransform xf = pose_to_transform(pose);
    const Vec3 c = camera_center(pose);
    const int64_t r = grid.resolution;
    const int64_t n = grid.voxel_count();
    std::vector<double> out(static_cast<size_t>(4 * n));
    int64_t idx = 0;
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < r; ++j)
            for (int64_t k = 0; k < r; ++k, ++idx) {
                const Vec3 p = grid.voxel_center(i, j, k);
                const Vec3 d = (p - c).normalized();
                out[static_cast<size_t>(idx)] = d.x();
                out[static_cast<size_t>(n + idx)] = d.y();
                out[static_cast<size_t>(2 * n + idx)] = d.z();
                out[static_cast<size_t>(3 * n + idx)] = xf.apply(p).z();
            }
    return Tensor(Shape{4, r, r, r}, std::move(out));
}

namespace {

double normalize_depth(double d, const DepthRange& range) {
    return 2.0 * (d - range.near) / (range.far - range.near) - 1.0;
}

}  // namespace

ViewGeometry make_view_geometry(const CameraPose& pose, const GridSpec& grid, const FrustumSpec& frustum,
                                int64_t height, int64_t width, int64_t n_freq) {
    ViewGeometry g;
    g.pose = pose.at_resolution(height, width);
    g.grid = grid;
    g.height = height;
    g.width = width;
    g.n_freq = n_freq;
    g.range = grid_depth_range(pose.radius, grid);
    g.depths = frustum_depths(g.range.near, g.range.far, frustum.depth_samples);

    const RigidTransform xf = pose_to_transform(g.pose);
    const int64_t r = grid.resolution;
    const int64_t n = grid.voxel_count();

    std::vector<double> pix(static_cast<size_t>(2 * n));
    std::vector<double> mask(static_cast<size_t>(n));
    int64_t idx = 0;
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < r; ++j)
            for (int64_t k = 0; k < r; ++k, ++idx) {
                const Projection p = project(grid.voxel_center(i, j, k), g.pose, xf);
                const bool inside = p.valid && p.v >= 0.0 && p.v <= static_cast<double>(height - 1) && p.u >= 0.0 &&
                                    p.u <= static_cast<double>(width - 1);
                pix[static_cast<size_t>(2 * idx)] = p.valid ? p.v : -1.0;
                pix[static_cast<size_t>(2 * idx + 1)] = p.valid ? p.u : -1.0;
                mask[static_cast<size_t>(idx)] = inside ? 1.0 : 0.0;
            }
    g.voxel_pixels = Tensor(Shape{n, 2}, std::move(pix));
    g.voxel_mask = Tensor(Shape{1, r, r, r}, mask);

    Tensor cam = camera_param_volume(g.pose, grid);
    {
        auto v = cam.mutable_values();
        for (int64_t q = 0; q < n; ++q) v[static_cast<size_t>(3 * n + q)] = normalize_depth(v[static_cast<size_t>(3 * n + q)], g.range);
    }
    Tensor enc = pos_encode(cam, n_freq);
    {
        auto v = enc.mutable_values();
        const int64_t ch = enc.dim(0);
        for (int64_t c = 0; c < ch; ++c)
            for (int64_t q = 0; q < n; ++q) v[static_cast<size_t>(c * n + q)] *= mask[static_cast<size_t>(q)];
    }
    g.camera_encoding = enc;

    const int64_t d_count = static_cast<int64_t>(g.depths.size());
    const int64_t k_count = d_count * height * width;
    std::vector<double> coords(static_cast<size_t>(3 * k_count));
    std::vector<double> dnorm(static_cast<size_t>(d_count * height * width));
    int64_t s = 0;
    for (int64_t d = 0; d < d_count; ++d)
        for (int64_t y = 0; y < height; ++y)
            for (int64_t x = 0; x < width; ++x, ++s) {
                const double depth = g.depths[static_cast<size_t>(d)];
                const Vec3 lc = grid.lattice_coord(
                    unproject(static_cast<double>(x), static_cast<double>(y), depth, g.pose, xf));
                coords[static_cast<size_t>(3 * s)] = lc.x();
                coords[static_cast<size_t>(3 * s + 1)] = lc.y();
                coords[static_cast<size_t>(3 * s + 2)] = lc.z();
                dnorm[static_cast<size_t>(s)] = normalize_depth(depth, g.range);
            }
    g.frustum_voxels = Tensor(Shape{k_count, 3}, std::move(coords));
    g.depth_encoding = pos_encode(Tensor(Shape{1, d_count, height, width}, std::move(dnorm)), n_freq);
    return g;
}

WorldVolume unproject_features(const Tensor& x, const ViewGeometry& geom) {
    if (x.rank() != 3 || x.dim(1) != geom.height || x.dim(2) != geom.width) {
        throw ShapeError("feature map " + shape_str(x.shape()) + " does not match the view geometry");
    }
    const int64_t r = geom.grid.resolution;
    Sampled s = bilinear_sample2d(x, geom.voxel_pixels);
    Tensor lifted = reshape(transpose(s.features, 0, 1), {x.dim(0), r, r, r});
    const Tensor parts[] = {lifted, geom.camera_encoding};
    return {concat(parts, 0), geom.voxel_mask};
}

FrustumVolume warp_to_frustum(const WorldVolume& vol, const ViewGeometry& geom, bool append_depth_encoding) {
    const int64_t d = static_cast<int64_t>(geom.depths.size());
    const int64_t h = geom.height, w = geom.width;
    const int64_t c = vol.features.dim(0);

    Sampled feats = trilinear_sample3d(vol.features, geom.frustum_voxels);
    Sampled cover = trilinear_sample3d(vol.mask, geom.frustum_voxels);
    std::vector<double> mask(static_cast<size_t>(d * h * w));
    for (size_t i = 0; i < mask.size(); ++i) {
        mask[i] = (cover.mask[static_cast<int64_t>(i)] > 0.0 && cover.features[static_cast<int64_t>(i)] > 0.0) ? 1.0 : 0.0;
    }
    Tensor mask_t(Shape{1, d, h, w}, mask);
    // Masked voxels hold zeros, so invalid samples already read zero.
    Tensor out = reshape(transpose(feats.features, 0, 1), {c, d, h, w});
    if (append_depth_encoding) {
        const Tensor enc = mul(geom.depth_encoding, mask_t);
        const Tensor parts[] = {out, enc};
        out = concat(parts, 0);
    }
    return {out, mask_t, geom.depths};
}

}  // namespace mvc
