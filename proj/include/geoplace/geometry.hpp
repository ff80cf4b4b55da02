#pragma once

// Parameterized primitives, contact features and their derivatives with
// respect to the geometric parameters.
//
// Conventions: object A is the static environment, object B the grasped
// body. Normals point from A to B. Derivative matrices have one column per
// sensitivity direction; the first P columns are the geometric parameters
// and callers may append extra directions (see PoseSensitivity).

#include <array>
#include <compare>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "geoplace/types.hpp"

namespace geoplace::geometry {

/// Vertex of the grasped body in the end-effector frame.
struct BodyVertex {
  Vec3 local = Vec3::Zero();
  Mat3X dlocal;  // 3 x P
};

/// Planar rectangular face of the grasped body in the end-effector frame.
/// The outward normal is constant in the body frame.
struct BodyFace {
  Vec3 center = Vec3::Zero();
  Mat3X dcenter;  // 3 x P
  Vec3 outward_normal = -Vec3::UnitZ();
  Vec3 axis_u = Vec3::UnitX();
  Vec3 axis_v = Vec3::UnitY();
  double half_u = 0.0;
  double half_v = 0.0;
};

/// Static half-space {x : n.(x - point) <= 0}; the surface is its boundary.
struct HalfSpace {
  Vec3 point = Vec3::Zero();
  Mat3X dpoint;  // 3 x P
  Vec3 normal = Vec3::UnitZ();
};

/// Axis-aligned box pillar; only its square top face takes part in contact.
struct Pillar {
  Vec3 top_center = Vec3::Zero();
  Mat3X dtop_center;  // 3 x P
  double half_side = 0.0;

  std::array<Vec3, 4> top_corners() const;
};

/// All primitives of a scene evaluated at one parameter value.
struct ShapeSet {
  int num_params = 0;
  std::vector<BodyVertex> body_vertices;
  std::optional<BodyFace> body_bottom;
  std::vector<HalfSpace> planes;
  std::vector<Pillar> pillars;

  /// Throws GeoplaceError when extents are non-positive or sizes disagree.
  void validate() const;
};

/// Maps a parameter value to the evaluated primitives.
struct ShapeModel {
  std::string name;
  std::function<ShapeSet(const GeomParam&)> build;

  ShapeSet operator()(const GeomParam& theta) const;
};

struct ContactOptions {
  double contact_tolerance = 1e-6;
  double penetration_tolerance = 1e-4;
};

enum class PairKind { kVertexPlane, kVertexPillar, kPillarCornerFace };

/// Identity of a primitive pair; stable across configurations.
struct PairId {
  PairKind kind = PairKind::kVertexPlane;
  int primitive = 0;  // plane or pillar index; pillars follow planes
  int feature = 0;    // body vertex or pillar corner index

  auto operator<=>(const PairId&) const = default;
};

struct ContactFeature {
  PairId id;
  Vec3 pA = Vec3::Zero();
  Vec3 pB = Vec3::Zero();
  Vec3 vA = Vec3::Zero();
  Vec3 vB = Vec3::Zero();
  Vec3 n = Vec3::UnitZ();
  Vec3 t1 = Vec3::UnitX();
  Vec3 t2 = Vec3::UnitY();
  double gap = 0.0;

  Mat3X dpA_dtheta;
  Mat3X dpB_dtheta;
  Mat3X dn_dtheta;
  Mat3X dt1_dtheta;
  Mat3X dt2_dtheta;
  RowX dgap_dtheta;
  // Derivative of the lever arm pB - pose.position; equals dpB_dtheta when
  // the pose is held fixed.
  Mat3X dlever_dtheta;

  int num_directions() const { return static_cast<int>(dpB_dtheta.cols()); }
};

/// Derivatives of the body pose along each sensitivity direction: position
/// columns and world-frame rotation-vector columns (dR R^T = [col]x).
struct PoseSensitivity {
  Mat3X dposition;
  Mat3X drotation;

  static PoseSensitivity zero(int directions);
  int directions() const { return static_cast<int>(dposition.cols()); }
};

class PenetrationExceeded : public GeoplaceError {
 public:
  using GeoplaceError::GeoplaceError;
};

/// Every contact with gap <= contact tolerance, sorted by primitive id then
/// lexicographically by pB. Derivatives are partials at fixed pose.
std::vector<ContactFeature> detect_contacts(const ShapeModel& shapes,
                                            const Pose& pose,
                                            const Twist& twist,
                                            const GeomParam& theta,
                                            const ContactOptions& options = {});

/// As above on pre-evaluated shapes, with total derivatives along
/// `sensitivity.directions()` columns. Parameter partials occupy the first
/// `shapes.num_params` columns. Zero directions skips all derivatives.
std::vector<ContactFeature> detect_contacts(const ShapeSet& shapes,
                                            const Pose& pose,
                                            const Twist& twist,
                                            const PoseSensitivity& sensitivity,
                                            const ContactOptions& options = {});

struct PairGap {
  PairId id;
  double gap = 0.0;
};

/// Gap of every candidate pair, planes first. Pillar pairs report the signed
/// distance to the pillar column or to the prism swept by the body face, so
/// every gap is continuous in the pose.
std::vector<PairGap> pair_gaps(const ShapeSet& shapes, const Pose& pose);

/// Minimum gap over all candidate pairs; negative iff penetrating.
/// +infinity when no pair is geometrically possible.
double signed_distance(const ShapeModel& shapes, const Pose& pose,
                       const GeomParam& theta);

/// Gram-Schmidt tangents from the world axis least aligned with `n`.
std::pair<Vec3, Vec3> tangent_basis(const Vec3& n);

/// J^T (6 x 3m): per contact the normal, t1 and t2 columns [r x d; d] with
/// r = pB - pose.position.
MatX contact_jacobian(const std::vector<ContactFeature>& features,
                      const Pose& pose);

/// J^T z and its derivative along every sensitivity direction.
std::pair<Vec6, Mat6X> jacobian_theta_product(
    const std::vector<ContactFeature>& features, const Pose& pose,
    const VecX& z);

/// J z' (3m) and its derivative along every sensitivity direction.
std::pair<VecX, MatX> jacobian_product_theta(
    const std::vector<ContactFeature>& features, const Pose& pose,
    const Vec6& z);

}  // namespace geoplace::geometry
