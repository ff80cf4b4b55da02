#pragma once

// Quasi-static rigid-body simulator of the grasped body under impedance
// control with forward-mode sensitivities of the contact wrench.

#include <optional>
#include <vector>

#include "geoplace/geometry.hpp"
#include "geoplace/lcp.hpp"
#include "geoplace/types.hpp"

namespace geoplace::dynamics {

struct RobotState {
  Pose pose;
  Twist twist = Twist::Zero();
};

struct Action {
  Pose reference;
};

struct WrenchWithSensitivity {
  Wrench value;
  Mat6X dvalue_dtheta;  // 6 x P, rows (torque, force)
};

struct BodyModel {
  double mass = 1.0;
  Mat3 inertia = Mat3::Identity() * 0.02;
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);
  Mat6 stiffness = Mat6::Zero();  // rows/cols (rotation, translation)
  Mat6 damping = Mat6::Zero();
  double dt = 0.01;
  double friction = 0.0;  // 0 selects normal-only contact
  geometry::ContactOptions contact;
  int max_toi_splits = 8;
  double toi_tolerance = 1e-12;  // bisection width (s)
  double grazing_speed = 1e-8;   // |v_n| at or below this gets no TOI gradient

  /// Throws GeoplaceError unless mass > 0 and inertia/stiffness are SPD.
  void validate() const;
};

/// Diagonal gains with the given damping ratio.
BodyModel make_body_model(double mass, double rot_inertia, double rot_stiffness,
                          double lin_stiffness, double damping_ratio, double dt);

/// Per-direction derivatives of a state: position, world rotation vector,
/// and twist.
struct StateSensitivity {
  Mat3X dposition;
  Mat3X drotation;
  Mat6X dtwist;

  static StateSensitivity zero(int directions);
  int directions() const { return static_cast<int>(dposition.cols()); }
};

/// K * PoseError(reference, pose) - D * twist, with PoseError =
/// (rotation vector of R_ref R^T, p_ref - p).
Wrench control_wrench(const Action& action, const RobotState& state,
                      const BodyModel& model);

/// Derivative of control_wrench along the directions of `sens`.
Mat6X control_wrench_sensitivity(const Action& action, const RobotState& state,
                                 const StateSensitivity& sens,
                                 const BodyModel& model);

struct StepFreeResult {
  RobotState state;
  StateSensitivity sens;
  VecX impulse;   // 3m: (normal, t1, t2) per contact
  MatX dimpulse;  // 3m x Q
  Vec6 contact_impulse = Vec6::Zero();  // J^T impulse (torque, force), N*s
  Mat6X dcontact_impulse;
  std::vector<geometry::ContactFeature> features;
  bool singular_block = false;
};

/// Velocity-stepping update over `h` with the contact set held fixed.
/// `dcontrol` and `dh` carry the derivatives of the control wrench and of
/// the duration along the same Q directions as `sens`; Q may be 0.
StepFreeResult advance(const geometry::ShapeSet& shapes, const BodyModel& model,
                       const RobotState& state, const StateSensitivity& sens,
                       const Wrench& control, const Mat6X& dcontrol, double h,
                       const RowX& dh);

/// Convenience form of `advance` with parameter sensitivities only.
StepFreeResult step_free(const geometry::ShapeModel& shapes, const BodyModel& model,
                         const RobotState& state, const Wrench& control, double h,
                         const GeomParam& theta);

struct TimeOfImpact {
  double time = 0.0;
  geometry::PairId pair;
};

/// Earliest time in (0, h] at which a pair that is not in contact at the
/// start reaches zero gap along the fixed-contact-set trajectory.
std::optional<TimeOfImpact> detect_toi(const geometry::ShapeSet& shapes,
                                       const BodyModel& model,
                                       const RobotState& state,
                                       const Wrench& control, double h);

std::optional<TimeOfImpact> detect_toi(const geometry::ShapeModel& shapes,
                                       const BodyModel& model,
                                       const RobotState& state,
                                       const Wrench& control, double h,
                                       const GeomParam& theta);

class GrazingImpact : public GeoplaceError {
 public:
  using GeoplaceError::GeoplaceError;
};

/// d toi / d theta = -n^T (dpB - dpA) / v_n for the impacting pair; positive
/// when the perturbation separates the bodies. Throws GrazingImpact when
/// |v_n| <= `grazing_speed`.
RowX toi_gradient(const geometry::ContactFeature& feature, double v_n,
                  double grazing_speed = 1e-8);

struct StepResult {
  RobotState state;
  StateSensitivity sens;  // P directions
  WrenchWithSensitivity wrench;
  int substeps = 0;
  int grazing_impacts = 0;
  bool singular_block = false;
  // Pair ids in contact during each sub-step, for mode-stability checks.
  std::vector<std::vector<geometry::PairId>> contact_modes;
  // Pair that ends each split sub-step at its time of impact.
  std::vector<geometry::PairId> impact_pairs;
};

struct StepOptions {
  bool sensitivities = true;
};

/// One simulator step: control wrench, recursive TOI splitting, and the mean
/// contact wrench (sum of J^T impulse over sub-steps) / dt. `sens` holds the
/// derivatives of `state` with respect to theta.
StepResult step(const geometry::ShapeModel& shapes, const BodyModel& model,
                const RobotState& state, const StateSensitivity& sens,
                const Action& action, const GeomParam& theta,
                const StepOptions& options = {});

StepResult step(const geometry::ShapeModel& shapes, const BodyModel& model,
                const RobotState& state, const Action& action,
                const GeomParam& theta, const StepOptions& options = {});

/// Kinetic energy 0.5 v^T M v with the constant model inertia.
double kinetic_energy(const RobotState& state, const BodyModel& model);

}  // namespace geoplace::dynamics
