#pragma once

#include <Eigen/Dense>

#include "aqmm/random.hpp"

namespace aqmm {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

// Unit quaternion q = q_x i + q_y j + q_z k + q_w restricted to the
// canonical hemisphere q_w >= 0, so each rotation has a unique
// representative (q and -q encode the same rotation).
class UnitQuaternion {
public:
    // Identity rotation.
    UnitQuaternion() : x_(0.0), y_(0.0), z_(0.0), w_(1.0) {}

    // Validating constructor: components must already be unit-norm
    // (|norm - 1| <= 1e-9) and canonical (q_w >= 0); throws otherwise.
    UnitQuaternion(double x, double y, double z, double w);

    double x() const { return x_; }
    double y() const { return y_; }
    double z() const { return z_; }
    double w() const { return w_; }

    double component(int i) const;  // 0..3 -> x, y, z, w

    double dot(const UnitQuaternion& other) const {
        return x_ * other.x_ + y_ * other.y_ + z_ * other.z_ + w_ * other.w_;
    }

    bool operator==(const UnitQuaternion& other) const = default;

private:
    double x_, y_, z_, w_;
};

// Normalizes raw components and flips sign onto the q_w >= 0 hemisphere.
// A q_w = 0 tie is broken by making the first nonzero of (q_x, q_y, q_z)
// positive. Throws std::invalid_argument on zero norm.
UnitQuaternion canonicalize(double x, double y, double z, double w);

Mat3 quat_to_matrix(const UnitQuaternion& q);

// Throws std::invalid_argument unless R^T R = I (1e-8 elementwise) and
// det R = 1 (1e-8).
UnitQuaternion matrix_to_quat(const Mat3& r);

// Rotation angle between the two rotations: 2 * acos(min(1, |q1 . q2|)),
// in [0, pi].
double geodesic_distance(const UnitQuaternion& q1, const UnitQuaternion& q2);

// theta * axis with theta = 2 * acos(q_w); norm <= pi for canonical input.
Vec3 quat_to_rotation_vector(const UnitQuaternion& q);

// Haar-uniform rotation: normalized 4-dimensional standard normal draw,
// canonicalized.
UnitQuaternion sample_uniform_rotation(Rng& rng);

}  // namespace aqmm
