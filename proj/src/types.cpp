#include "geoplace/types.hpp"

#include <cmath>

#include "geoplace/so3.hpp"

namespace geoplace {

GeomParam::GeomParam(VecX values, std::vector<std::string> names)
    : values_(std::move(values)), names_(std::move(names)) {
  if (values_.size() < 1 ||
      static_cast<std::size_t>(values_.size()) != names_.size()) {
    throw GeoplaceError("GeomParam: values and names must have equal size >= 1");
  }
  if (!values_.allFinite()) {
    throw GeoplaceError("GeomParam: non-finite component");
  }
}

GeomParam GeomParam::zeros(std::vector<std::string> names) {
  const auto n = static_cast<Eigen::Index>(names.size());
  return GeomParam(VecX::Zero(n), std::move(names));
}

GeomParam GeomParam::with_values(const VecX& values) const {
  return GeomParam(values, names_);
}

bool Pose::valid(double tol) const {
  return position.allFinite() && orientation.coeffs().allFinite() &&
         std::abs(orientation.norm() - 1.0) <= tol;
}

namespace so3 {

Quat exp(const Vec3& phi) {
  const double angle = phi.norm();
  if (angle < 1e-12) {
    Quat q(1.0, 0.5 * phi.x(), 0.5 * phi.y(), 0.5 * phi.z());
    return q.normalized();
  }
  return Quat(Eigen::AngleAxisd(angle, phi / angle));
}

Vec3 log(const Quat& q_in) {
  Quat q = q_in.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const double s = q.vec().norm();
  if (s < 1e-12) return 2.0 * q.vec();
  const double angle = 2.0 * std::atan2(s, q.w());
  return angle / s * q.vec();
}

Mat3 left_jacobian(const Vec3& phi) {
  const double a = phi.norm();
  const Mat3 k = skew(phi);
  if (a < 1e-6) return Mat3::Identity() + 0.5 * k + k * k / 6.0;
  const double a2 = a * a;
  return Mat3::Identity() + (1.0 - std::cos(a)) / a2 * k +
         (a - std::sin(a)) / (a2 * a) * k * k;
}

Quat align(const Vec3& from, const Vec3& to) {
  return Quat::FromTwoVectors(from, to).normalized();
}

double angle_between(const Quat& a, const Quat& b) {
  return log(a.conjugate() * b).norm();
}

}  // namespace so3
}  // namespace geoplace
