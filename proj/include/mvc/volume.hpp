#pragma once

// World voxel grids, per-view frustum grids and the lifts between them.
//
// The world grid is cell-centred: voxel (i, j, k) of a grid with resolution R
// and half-extent b sits at -b + (idx + 0.5) * 2b / R on the x, y, z axes.
// Volumes are stored as [C, R, R, R] indexed (i, j, k) = (x, y, z).

#include <cstdint>
#include <vector>

#include "mvc/camera.hpp"
#include "mvc/tensor.hpp"

namespace mvc {

struct GridSpec {
    int64_t resolution = 16;
    double half_extent = 1.0;

    double voxel_size() const { return 2.0 * half_extent / static_cast<double>(resolution); }
    Vec3 voxel_center(int64_t i, int64_t j, int64_t k) const;
    // Continuous lattice coordinate of a world point (inverse of voxel_center).
    Vec3 lattice_coord(const Vec3& p) const;
    int64_t voxel_count() const { return resolution * resolution * resolution; }
};

struct FrustumSpec {
    int64_t depth_samples = 16;
};

// Depth range that covers the whole grid from a camera at `radius`.
struct DepthRange {
    double near = 0.0;
    double far = 0.0;
};
DepthRange grid_depth_range(double radius, const GridSpec& grid);

// D uniformly spaced values including both ends.
std::vector<double> frustum_depths(double d_near, double d_far, int64_t count);

// Input [C, ...] -> [C * 2 * n_freq, ...]; channel block of input channel c is
// [sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^{n-1} pi x), cos(2^{n-1} pi x)].
// Constant w.r.t. autodiff (geometry is never differentiated).
Tensor pos_encode(const Tensor& x, int64_t n_freq);

// Per-voxel world-frame unit direction from the camera centre and camera-frame
// depth: [4, R, R, R].
Tensor camera_param_volume(const CameraPose& pose, const GridSpec& grid);

struct WorldVolume {
    Tensor features;  // [C, R, R, R]
    Tensor mask;      // [1, R, R, R], 0/1
};

struct FrustumVolume {
    Tensor features;  // [C, D, h, w]
    Tensor mask;      // [1, D, h, w], 0/1
    std::vector<double> depths;
};

// Everything about one view that depends on geometry only. Built once per
// (pose, layer extent) and reused across denoising steps.
struct ViewGeometry {
    CameraPose pose;  // at the layer resolution
    GridSpec grid;
    int64_t height = 0;
    int64_t width = 0;
    int64_t n_freq = 6;
    DepthRange range;
    std::vector<double> depths;
    Tensor voxel_pixels;    // [R^3, 2] (row, col); out-of-image for voxels behind the camera
    Tensor camera_encoding; // [8 * n_freq, R, R, R], already zero where the voxel is not seen
    Tensor voxel_mask;      // [1, R, R, R]
    Tensor frustum_voxels;  // [D * h * w, 3] lattice coordinates of the frustum samples
    Tensor depth_encoding;  // [2 * n_freq, D, h, w], depths mapped affinely onto [-1, 1]

    int64_t camera_channels() const { return 8 * n_freq; }
    int64_t depth_channels() const { return 2 * n_freq; }
};

ViewGeometry make_view_geometry(const CameraPose& pose, const GridSpec& grid, const FrustumSpec& frustum,
                                int64_t height, int64_t width, int64_t n_freq = 6);

// Bilinear lift of a [C, h, w] feature map onto the grid, concatenated with the
// encoded camera parameters: [C + 8 * n_freq, R, R, R].
WorldVolume unproject_features(const Tensor& x, const ViewGeometry& geom);

// Trilinear resampling of a world volume on the view's frustum. The depth
// encoding is appended when `append_depth_encoding` is set. A frustum sample
// is valid when it lies inside the lattice and touches at least one valid voxel.
FrustumVolume warp_to_frustum(const WorldVolume& vol, const ViewGeometry& geom, bool append_depth_encoding = true);

}  // namespace mvc
