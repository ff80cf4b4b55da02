#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace geoplace {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat3X = Eigen::Matrix<double, 3, Eigen::Dynamic>;
using Mat6X = Eigen::Matrix<double, 6, Eigen::Dynamic>;
using RowX = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using Quat = Eigen::Quaterniond;

/// Uncertain geometric parameters with per-component labels.
class GeomParam {
 public:
  GeomParam() = default;
  GeomParam(VecX values, std::vector<std::string> names);

  /// All-zero parameter with the given labels.
  static GeomParam zeros(std::vector<std::string> names);

  const VecX& values() const { return values_; }
  VecX& values() { return values_; }
  const std::vector<std::string>& names() const { return names_; }
  int size() const { return static_cast<int>(values_.size()); }
  double operator[](int i) const { return values_[i]; }
  double& operator[](int i) { return values_[i]; }

  /// Same labels, new values.
  GeomParam with_values(const VecX& values) const;

 private:
  VecX values_;
  std::vector<std::string> names_;
};

/// Rigid pose: world position and unit orientation.
struct Pose {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();

  Mat3 rotation() const { return orientation.toRotationMatrix(); }
  Vec3 transform(const Vec3& local) const {
    return position + orientation * local;
  }
  bool valid(double tol = 1e-9) const;
};

/// Twist at the end-effector origin in world axes: (angular, linear).
using Twist = Vec6;

/// Sensor-frame identifier for wrenches.
enum class WrenchFrame { kWorldAtEndEffector };

/// (torque, force) pair; torque about the end-effector origin.
struct Wrench {
  Vec3 torque = Vec3::Zero();
  Vec3 force = Vec3::Zero();
  WrenchFrame frame = WrenchFrame::kWorldAtEndEffector;

  Vec6 stacked() const {
    Vec6 w;
    w << torque, force;
    return w;
  }
  static Wrench from_stacked(const Vec6& w) {
    Wrench out;
    out.torque = w.head<3>();
    out.force = w.tail<3>();
    return out;
  }
};

class GeoplaceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace geoplace
