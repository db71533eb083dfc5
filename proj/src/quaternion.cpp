#include "aqmm/quaternion.hpp"

#include <cmath>
#include <stdexcept>

namespace aqmm {

namespace {

double clamp_unit(double x) { return std::min(1.0, std::max(-1.0, x)); }

}  // namespace

UnitQuaternion::UnitQuaternion(double x, double y, double z, double w)
    : x_(x), y_(y), z_(z), w_(w) {
    const double norm_sq = x * x + y * y + z * z + w * w;
    if (std::abs(norm_sq - 1.0) > 1e-9) {
        throw std::invalid_argument("UnitQuaternion: components are not unit norm");
    }
    if (w < 0.0) {
        throw std::invalid_argument("UnitQuaternion: q_w must be >= 0");
    }
}

double UnitQuaternion::component(int i) const {
    switch (i) {
        case 0: return x_;
        case 1: return y_;
        case 2: return z_;
        case 3: return w_;
        default: throw std::invalid_argument("UnitQuaternion: component index out of range");
    }
}

UnitQuaternion canonicalize(double x, double y, double z, double w) {
    const double norm_sq = x * x + y * y + z * z + w * w;
    if (!(norm_sq > 0.0) || !std::isfinite(norm_sq)) {
        throw std::invalid_argument("canonicalize: zero or non-finite norm");
    }
    // Already-unit inputs pass through bit-exactly (sign fix only), which
    // keeps canonicalization idempotent and the double-cover identity exact.
    if (std::abs(norm_sq - 1.0) > 1e-9) {
        const double norm = std::sqrt(norm_sq);
        x /= norm;
        y /= norm;
        z /= norm;
        w /= norm;
    }
    bool flip = w < 0.0;
    if (w == 0.0) {
        // Boundary representative: first nonzero of (q_x, q_y, q_z) positive.
        if (x != 0.0) {
            flip = x < 0.0;
        } else if (y != 0.0) {
            flip = y < 0.0;
        } else {
            flip = z < 0.0;
        }
    }
    if (flip) {
        x = -x;
        y = -y;
        z = -z;
        w = -w;
    }
    return UnitQuaternion(x, y, z, w);
}

Mat3 quat_to_matrix(const UnitQuaternion& q) {
    const double x = q.x(), y = q.y(), z = q.z(), w = q.w();
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),
         2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
         2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y);
    return r;
}

UnitQuaternion matrix_to_quat(const Mat3& r) {
    if (((r.transpose() * r) - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-8 ||
        std::abs(r.determinant() - 1.0) > 1e-8) {
        throw std::invalid_argument("matrix_to_quat: input is not a proper rotation matrix");
    }
    // Shepperd's method: pick the largest of the four squared components.
    const double trace = r.trace();
    double x, y, z, w;
    if (trace > r(0, 0) && trace > r(1, 1) && trace > r(2, 2)) {
        const double s = std::sqrt(trace + 1.0) * 2.0;
        w = 0.25 * s;
        x = (r(2, 1) - r(1, 2)) / s;
        y = (r(0, 2) - r(2, 0)) / s;
        z = (r(1, 0) - r(0, 1)) / s;
    } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
        const double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
        w = (r(2, 1) - r(1, 2)) / s;
        x = 0.25 * s;
        y = (r(0, 1) + r(1, 0)) / s;
        z = (r(0, 2) + r(2, 0)) / s;
    } else if (r(1, 1) > r(2, 2)) {
        const double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
        w = (r(0, 2) - r(2, 0)) / s;
        x = (r(0, 1) + r(1, 0)) / s;
        y = 0.25 * s;
        z = (r(1, 2) + r(2, 1)) / s;
    } else {
        const double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
        w = (r(1, 0) - r(0, 1)) / s;
        x = (r(0, 2) + r(2, 0)) / s;
        y = (r(1, 2) + r(2, 1)) / s;
        z = 0.25 * s;
    }
    return canonicalize(x, y, z, w);
}

double geodesic_distance(const UnitQuaternion& q1, const UnitQuaternion& q2) {
    // 2*acos(min(1, |q1.q2|)), evaluated through the chord to the nearer of
    // +-q2 so that identical rotations give exactly zero.
    const double dx = q1.x() - q2.x(), sx = q1.x() + q2.x();
    const double dy = q1.y() - q2.y(), sy = q1.y() + q2.y();
    const double dz = q1.z() - q2.z(), sz = q1.z() + q2.z();
    const double dw = q1.w() - q2.w(), sw = q1.w() + q2.w();
    const double chord_sq = std::min(dx * dx + dy * dy + dz * dz + dw * dw,
                                     sx * sx + sy * sy + sz * sz + sw * sw);
    return 4.0 * std::asin(std::min(1.0, 0.5 * std::sqrt(chord_sq)));
}

Vec3 quat_to_rotation_vector(const UnitQuaternion& q) {
    const double theta = 2.0 * std::acos(clamp_unit(q.w()));
    if (theta < 1e-12) {
        return Vec3::Zero();
    }
    const double s = std::sin(theta / 2.0);
    return (theta / s) * Vec3(q.x(), q.y(), q.z());
}

UnitQuaternion sample_uniform_rotation(Rng& rng) {
    const double a = rng.normal();
    const double b = rng.normal();
    const double c = rng.normal();
    const double d = rng.normal();
    return canonicalize(a, b, c, d);
}

}  // namespace aqmm
