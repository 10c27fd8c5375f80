#include "poseval/se3.hpp"

#include "poseval/error.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace poseval {

namespace {

constexpr double kDegPerRad = 180.0 / std::numbers::pi;

}  // namespace

double orthonormality_drift(const Mat3& r) {
  const double ortho = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = std::abs(r.determinant() - 1.0);
  return std::max(ortho, det);
}

Mat3 orthonormalize(const Mat3& r) {
  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0) u.col(2) = -u.col(2);
  return u * v.transpose();
}

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw Error(ErrorKind::InvalidArgument, "non-finite transform entries");
  }
  const double drift = orthonormality_drift(rotation);
  if (drift > kRotationTolerance) {
    throw Error(ErrorKind::InvalidArgument,
                "rotation is not orthonormal (drift " + std::to_string(drift) + ")");
  }
}

RigidTransform RigidTransform::from_translation(const Vec3& t) {
  return RigidTransform(Mat3::Identity(), t);
}

RigidTransform RigidTransform::from_rotation(const Mat3& r) { return RigidTransform(r, Vec3::Zero()); }

RigidTransform RigidTransform::nearest(const Mat3& rotation, const Vec3& translation) {
  if (!rotation.allFinite()) throw Error(ErrorKind::InvalidArgument, "non-finite rotation");
  return RigidTransform(orthonormalize(rotation), translation);
}

Mat4 RigidTransform::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return RigidTransform(RigidTransform::Trusted{}, a.rotation_ * b.rotation_,
                        a.rotation_ * b.translation_ + a.translation_);
}

RigidTransform inverse(const RigidTransform& t) {
  const Mat3 rt = t.rotation_.transpose();
  return RigidTransform(RigidTransform::Trusted{}, rt, -(rt * t.translation_));
}

double rotation_distance(const RigidTransform& a, const RigidTransform& b) {
  return (a.rotation() - b.rotation()).norm();
}

double translation_distance(const RigidTransform& a, const RigidTransform& b) {
  return (a.translation() - b.translation()).norm();
}

double geodesic_angle(const Mat3& r1, const Mat3& r2) {
  // Same value as arccos((tr(r1 r2^T) - 1) / 2), evaluated through atan2 so
  // that angles near 0 and 180 degrees keep full precision. Both terms are
  // built from elementwise products, so swapping r1 and r2 is exact.
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = r1(i, 0) * r2(j, 0) + r1(i, 1) * r2(j, 1) + r1(i, 2) * r2(j, 2);
  const double cos_term = (r1.array() * r2.array()).sum() - 1.0;
  const Vec3 skew(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
  const double sin_term = skew.norm();
  const double clamped_cos = std::clamp(cos_term, -2.0, 2.0);
  return std::atan2(sin_term, clamped_cos) * kDegPerRad;
}

Mat3 axis_angle(const Vec3& axis, double angle_deg) {
  const double n = axis.norm();
  if (!(n > 0)) throw Error(ErrorKind::InvalidArgument, "zero rotation axis");
  return Eigen::AngleAxisd(angle_deg / kDegPerRad, axis / n).toRotationMatrix();
}

Mat3 rot_x(double angle_deg) { return axis_angle(Vec3::UnitX(), angle_deg); }
Mat3 rot_y(double angle_deg) { return axis_angle(Vec3::UnitY(), angle_deg); }
Mat3 rot_z(double angle_deg) { return axis_angle(Vec3::UnitZ(), angle_deg); }

CameraIntrinsics CameraIntrinsics::make(double fx, double fy, double cx, double cy) {
  if (!(fx > 0) || !(fy > 0)) {
    throw Error(ErrorKind::InvalidArgument, "focal lengths must be positive");
  }
  return CameraIntrinsics{fx, fy, cx, cy};
}

Vec2 project(const CameraIntrinsics& k, const Vec3& p) {
  if (!(p.z() > 0)) {
    throw Error(ErrorKind::NonPositiveDepth, "point depth " + std::to_string(p.z()) + " <= 0");
  }
  return Vec2(k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy);
}

std::string to_string(const RigidTransform& t) {
  std::ostringstream os;
  os.precision(9);
  const auto& r = t.rotation();
  os << "R=[";
  for (int i = 0; i < 3; ++i) {
    os << (i ? "; " : "") << r(i, 0) << ' ' << r(i, 1) << ' ' << r(i, 2);
  }
  os << "] t=[" << t.translation().x() << ' ' << t.translation().y() << ' '
     << t.translation().z() << ']';
  return os.str();
}

}  // namespace poseval
