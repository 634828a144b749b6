#pragma once

// Closed-form fields of rectangular surface electrodes in the gapless-plane
// approximation. All quantities are per volt on the patch, SI units.

#include <cmath>
#include <cstddef>

#include <Eigen/Dense>

#include "constants.hpp"
#include "errors.hpp"

namespace iontrap {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct RectPatch {
    double x_lo = 0.0, x_hi = 0.0, y_lo = 0.0, y_hi = 0.0;  // m
    std::size_t electrode_id = 0;

    bool valid() const { return x_lo < x_hi && y_lo < y_hi; }
    double area() const { return (x_hi - x_lo) * (y_hi - y_lo); }
    // interior intersection test
    bool overlaps(const RectPatch& o) const {
        return x_lo < o.x_hi && o.x_lo < x_hi && y_lo < o.y_hi && o.y_lo < y_hi;
    }
};

namespace detail {

inline void require_above_plane(const Vec3& p) {
    if (!(p.z() > 0.0)) throw DomainError("evaluation point must satisfy z > 0");
}

// Calls f(X, Y, sign) for the four corners of the patch.
template <class F>
inline void for_corners(const RectPatch& patch, const Vec3& p, F&& f) {
    const double xs[2] = {patch.x_lo, patch.x_hi};
    const double ys[2] = {patch.y_lo, patch.y_hi};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) f(p.x() - xs[i], p.y() - ys[j], (i == j) ? 1.0 : -1.0);
}

}  // namespace detail

inline double patch_basis_potential(const RectPatch& patch, const Vec3& p) {
    detail::require_above_plane(p);
    const double z = p.z();
    double acc = 0.0;
    detail::for_corners(patch, p, [&](double X, double Y, double s) {
        const double R = std::sqrt(X * X + Y * Y + z * z);
        acc += s * std::atan(X * Y / (z * R));
    });
    return acc / kTwoPi;
}

inline Vec3 basis_gradient(const RectPatch& patch, const Vec3& p) {
    detail::require_above_plane(p);
    const double z = p.z();
    Vec3 g = Vec3::Zero();
    detail::for_corners(patch, p, [&](double X, double Y, double s) {
        const double R = std::sqrt(X * X + Y * Y + z * z);
        const double A = X * X + z * z;
        const double B = Y * Y + z * z;
        g.x() += s * z * Y / (R * A);
        g.y() += s * z * X / (R * B);
        g.z() -= s * X * Y * (R * R + z * z) / (R * A * B);
    });
    return g / kTwoPi;
}

inline Mat3 basis_hessian(const RectPatch& patch, const Vec3& p) {
    detail::require_above_plane(p);
    const double z = p.z();
    double xx = 0, xy = 0, xz = 0, yy = 0, yz = 0;
    detail::for_corners(patch, p, [&](double X, double Y, double s) {
        const double R2 = X * X + Y * Y + z * z;
        const double R = std::sqrt(R2);
        const double R3 = R2 * R;
        const double A = X * X + z * z;
        const double B = Y * Y + z * z;
        xx -= s * z * X * Y * (A + 2 * R2) / (R3 * A * A);
        yy -= s * z * X * Y * (B + 2 * R2) / (R3 * B * B);
        xy += s * z / R3;
        xz += s * Y * (R2 * A - z * z * (A + 2 * R2)) / (R3 * A * A);
        yz += s * X * (R2 * B - z * z * (B + 2 * R2)) / (R3 * B * B);
    });
    Mat3 h;
    h << xx, xy, xz, xy, yy, yz, xz, yz, -(xx + yy);
    return h / kTwoPi;
}

// Sums over a patch range (all patches treated as one electrode at 1 V).
template <class Range>
double sum_potential(const Range& patches, const Vec3& p) {
    double v = 0.0;
    for (const auto& q : patches) v += patch_basis_potential(q, p);
    return v;
}
template <class Range>
Vec3 sum_gradient(const Range& patches, const Vec3& p) {
    Vec3 g = Vec3::Zero();
    for (const auto& q : patches) g += basis_gradient(q, p);
    return g;
}
template <class Range>
Mat3 sum_hessian(const Range& patches, const Vec3& p) {
    Mat3 h = Mat3::Zero();
    for (const auto& q : patches) h += basis_hessian(q, p);
    return h;
}

}  // namespace iontrap
