#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <string>

namespace poseval {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Tolerance used to accept a 3x3 matrix as a proper rotation.
inline constexpr double kRotationTolerance = 1e-9;

// Largest absolute entry of R^T R - I, combined with |det R - 1|.
double orthonormality_drift(const Mat3& r);

// Closest proper rotation in the Frobenius sense (SVD projection).
Mat3 orthonormalize(const Mat3& r);

// Element of SE(3). Rotation is a proper rotation matrix, translation is in
// millimeters. Instances are immutable; every constructor that takes caller
// data validates the rotation.
class RigidTransform {
 public:
  RigidTransform() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}

  // Throws Error(InvalidArgument) when `rotation` is not orthonormal with
  // determinant +1 to kRotationTolerance.
  RigidTransform(const Mat3& rotation, const Vec3& translation);

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Vec3& t);
  static RigidTransform from_rotation(const Mat3& r);
  // Projects `rotation` onto SO(3) first; for data with small numeric drift.
  static RigidTransform nearest(const Mat3& rotation, const Vec3& translation);

  const Mat3& rotation() const noexcept { return rotation_; }
  const Vec3& translation() const noexcept { return translation_; }

  Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }
  Mat4 matrix() const;

 private:
  struct Trusted {};
  RigidTransform(Trusted, const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}

  friend RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
  friend RigidTransform inverse(const RigidTransform& t);

  Mat3 rotation_;
  Vec3 translation_;
};

// a * b: applies b first, then a.
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform inverse(const RigidTransform& t);

inline RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
  return compose(a, b);
}

// Frobenius norm of the rotation difference and Euclidean norm of the
// translation difference.
double rotation_distance(const RigidTransform& a, const RigidTransform& b);
double translation_distance(const RigidTransform& a, const RigidTransform& b);

// Angle of r1 * r2^T in degrees, in [0, 180].
double geodesic_angle(const Mat3& r1, const Mat3& r2);

// Rotation by `angle_deg` about `axis` (normalized internally).
Mat3 axis_angle(const Vec3& axis, double angle_deg);
Mat3 rot_x(double angle_deg);
Mat3 rot_y(double angle_deg);
Mat3 rot_z(double angle_deg);

struct CameraIntrinsics {
  double fx = 0;
  double fy = 0;
  double cx = 0;
  double cy = 0;

  // Throws Error(InvalidArgument) unless fx > 0 and fy > 0.
  static CameraIntrinsics make(double fx, double fy, double cx, double cy);
};

// Pinhole projection of a camera-frame point (mm) to pixels.
// Throws Error(NonPositiveDepth) when p.z <= 0.
Vec2 project(const CameraIntrinsics& k, const Vec3& p);

std::string to_string(const RigidTransform& t);

}  // namespace poseval
