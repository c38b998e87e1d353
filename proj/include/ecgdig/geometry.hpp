#pragma once

#include <array>
#include <cmath>

#include <Eigen/Dense>

#include "ecgdig/error.hpp"

namespace ecgdig {

using Mat3 = Eigen::Matrix3d;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Applies a homography to a point (pixel-center coordinates).
inline Vec2 apply(const Mat3& h, const Vec2& p) {
    const Vec3 q = h * Vec3(p.x(), p.y(), 1.0);
    return {q.x() / q.z(), q.y() / q.z()};
}

/// Homography mapping src[i] -> dst[i] for four point correspondences (DLT with h22 = 1).
inline Mat3 homography_from_points(const std::array<Vec2, 4>& src, const std::array<Vec2, 4>& dst) {
    Eigen::Matrix<double, 8, 8> a;
    Eigen::Matrix<double, 8, 1> b;
    for (int i = 0; i < 4; ++i) {
        const double x = src[i].x(), y = src[i].y(), u = dst[i].x(), v = dst[i].y();
        a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
        a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
        b(2 * i) = u;
        b(2 * i + 1) = v;
    }
    const Eigen::Matrix<double, 8, 1> h = a.fullPivLu().solve(b);
    Mat3 m;
    m << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
    return m;
}

inline Mat3 translation(double tx, double ty) {
    Mat3 m = Mat3::Identity();
    m(0, 2) = tx;
    m(1, 2) = ty;
    return m;
}

/// Rotation by `angle` radians about `center`.
inline Mat3 rotation_about(double angle, const Vec2& center) {
    Mat3 r = Mat3::Identity();
    r(0, 0) = std::cos(angle);
    r(0, 1) = -std::sin(angle);
    r(1, 0) = std::sin(angle);
    r(1, 1) = std::cos(angle);
    return translation(center.x(), center.y()) * r * translation(-center.x(), -center.y());
}

/// Hough line normal angle in [-pi/4, 3pi/4) for the line through a and b.
inline double line_normal_angle(const Vec2& a, const Vec2& b) {
    const Vec2 dir = b - a;
    double theta = std::atan2(dir.x(), -dir.y());  // normal = (cos t, sin t) perpendicular to dir
    while (theta < -kPi / 4) theta += kPi;
    while (theta >= 3 * kPi / 4) theta -= kPi;
    return theta;
}

/// Smallest distance between two line angles modulo pi.
inline double angle_distance(double a, double b) {
    double d = std::fmod(std::abs(a - b), kPi);
    return std::min(d, kPi - d);
}

}  // namespace ecgdig
