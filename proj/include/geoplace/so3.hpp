#pragma once

#include "geoplace/types.hpp"

namespace geoplace::so3 {

inline Mat3 skew(const Vec3& w) {
  Mat3 s;
  s << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return s;
}

/// Quaternion of the rotation vector `phi`.
Quat exp(const Vec3& phi);

/// Rotation vector of `q`, angle in [0, pi].
Vec3 log(const Quat& q);

/// Left Jacobian: exp(phi + d) ~= exp(J_l(phi) d) exp(phi).
Mat3 left_jacobian(const Vec3& phi);

/// Minimal rotation taking unit `from` onto unit `to`.
Quat align(const Vec3& from, const Vec3& to);

/// Geodesic angle between two orientations (rad).
double angle_between(const Quat& a, const Quat& b);

}  // namespace geoplace::so3
