#include "mvc/camera.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <Eigen/Geometry>

#include "mvc/errors.hpp"

namespace mvc {

CameraPose CameraPose::orbit(double azimuth, double elevation, double radius, double focal, int64_t height,
                             int64_t width) {
    CameraPose p;
    p.azimuth = azimuth;
    p.elevation = elevation;
    p.radius = radius;
    p.intrinsics.focal = focal;
    p.intrinsics.height = height;
    p.intrinsics.width = width;
    p.intrinsics.cx = 0.5 * static_cast<double>(width - 1);
    p.intrinsics.cy = 0.5 * static_cast<double>(height - 1);
    return p;
}

CameraPose CameraPose::at_resolution(int64_t height, int64_t width) const {
    const Intrinsics& k = intrinsics;
    const double sx = static_cast<double>(width) / static_cast<double>(k.width);
    const double sy = static_cast<double>(height) / static_cast<double>(k.height);
    if (std::abs(sx - sy) > 1e-12) throw ValueError("anisotropic rescale of a camera is not supported");
    CameraPose p = *this;
    p.intrinsics.focal = k.focal * sx;
    p.intrinsics.cx = (k.cx + 0.5) * sx - 0.5;
    p.intrinsics.cy = (k.cy + 0.5) * sy - 0.5;
    p.intrinsics.height = height;
    p.intrinsics.width = width;
    return p;
}

Vec3 camera_center(const CameraPose& pose) {
    const double ce = std::cos(pose.elevation);
    return pose.radius * Vec3(ce * std::cos(pose.azimuth), ce * std::sin(pose.azimuth), std::sin(pose.elevation));
}

RigidTransform pose_to_transform(const CameraPose& pose) {
    if (!(pose.radius > 0.0)) throw ValueError("camera radius must be positive");
    if (!(std::abs(pose.elevation) < 0.5 * M_PI)) throw ValueError("camera elevation must be inside (-90, 90) degrees");
    const Vec3 c = camera_center(pose);
    const Vec3 forward = -c / c.norm();
    const Vec3 right = forward.cross(Vec3::UnitZ()).normalized();
    const Vec3 down = forward.cross(right);
    RigidTransform xf;
    xf.rotation.row(0) = right.transpose();
    xf.rotation.row(1) = down.transpose();
    xf.rotation.row(2) = forward.transpose();
    // -R c, with the two components orthogonal to c written as exact zeros.
    xf.translation = Vec3(0.0, 0.0, pose.radius);
    return xf;
}

Projection project(const Vec3& point, const CameraPose& pose, const RigidTransform& xf) {
    const Vec3 q = xf.apply(point);
    Projection p;
    p.depth = q.z();
    p.valid = q.z() > 0.0;
    if (p.valid) {
        const Intrinsics& k = pose.intrinsics;
        p.u = k.focal * q.x() / q.z() + k.cx;
        p.v = k.focal * q.y() / q.z() + k.cy;
    }
    return p;
}

Projection project(const Vec3& point, const CameraPose& pose) { return project(point, pose, pose_to_transform(pose)); }

Vec3 unproject(double u, double v, double depth, const CameraPose& pose, const RigidTransform& xf) {
    if (!(depth > 0.0)) throw ValueError("unproject needs a positive depth");
    const Intrinsics& k = pose.intrinsics;
    const Vec3 q((u - k.cx) * depth / k.focal, (v - k.cy) * depth / k.focal, depth);
    return xf.apply_inverse(q);
}

Vec3 unproject(double u, double v, double depth, const CameraPose& pose) {
    return unproject(u, v, depth, pose, pose_to_transform(pose));
}

std::string format_pose_table(std::span<const CameraPose> poses) {
    std::string out;
    char line[256];
    for (const CameraPose& p : poses) {
        std::snprintf(line, sizeof line, "%.17g %.17g %.17g %.17g %lld %lld\n", p.azimuth, p.elevation, p.radius,
                      p.intrinsics.focal, static_cast<long long>(p.intrinsics.height),
                      static_cast<long long>(p.intrinsics.width));
        out += line;
    }
    return out;
}

std::vector<CameraPose> parse_pose_table(const std::string& text) {
    std::vector<CameraPose> poses;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        double az = 0, el = 0, r = 0, f = 0;
        int64_t h = 0, w = 0;
        if (!(ls >> az >> el >> r >> f >> h >> w)) throw IoError("malformed pose table line: " + line);
        poses.push_back(CameraPose::orbit(az, el, r, f, h, w));
    }
    return poses;
}

}  // namespace mvc
