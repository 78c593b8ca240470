#pragma once

// Orbit cameras around the world origin.
//
// World: right-handed, +Z up. A pose (az, el, r) puts the camera centre at
// r * (cos el cos az, cos el sin az, sin el) looking at the origin. Camera
// frame: +X right, +Y down, +Z forward. Pixel centres sit at integer (u, v)
// where u is the column and v the row.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mvc {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Intrinsics {
    double focal = 0.0;  // pixels, same for both axes
    double cx = 0.0;     // principal point, column
    double cy = 0.0;     // principal point, row
    int64_t height = 0;
    int64_t width = 0;
};

struct CameraPose {
    double azimuth = 0.0;    // radians
    double elevation = 0.0;  // radians, |el| < pi/2
    double radius = 1.0;
    Intrinsics intrinsics;

    // Principal point at the image centre ((W-1)/2, (H-1)/2).
    static CameraPose orbit(double azimuth, double elevation, double radius, double focal, int64_t height,
                            int64_t width);
    // Same camera seen through a resampled image of extent (height, width);
    // consistent with 2x average pooling of the pixel grid.
    CameraPose at_resolution(int64_t height, int64_t width) const;
};

// x_cam = R * x_world + t
struct RigidTransform {
    Mat3 rotation;
    Vec3 translation;
    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
    Vec3 apply_inverse(const Vec3& q) const { return rotation.transpose() * (q - translation); }
};

Vec3 camera_center(const CameraPose& pose);
RigidTransform pose_to_transform(const CameraPose& pose);

struct Projection {
    double u = 0.0;  // column
    double v = 0.0;  // row
    double depth = 0.0;
    bool valid = false;  // camera-frame z > 0
};

Projection project(const Vec3& point, const CameraPose& pose);
Projection project(const Vec3& point, const CameraPose& pose, const RigidTransform& xf);
Vec3 unproject(double u, double v, double depth, const CameraPose& pose);
Vec3 unproject(double u, double v, double depth, const CameraPose& pose, const RigidTransform& xf);

// Plain-text pose table, one view per line: azimuth elevation radius focal H W.
std::string format_pose_table(std::span<const CameraPose> poses);
std::vector<CameraPose> parse_pose_table(const std::string& text);

}  // namespace mvc
