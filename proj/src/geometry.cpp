#include "geoplace/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "geoplace/so3.hpp"

namespace geoplace::geometry {
namespace {

Mat3X pad(const Mat3X& m, int directions) {
  Mat3X out = Mat3X::Zero(3, directions);
  if (directions > 0 && m.size() > 0) out.leftCols(m.cols()) = m;
  return out;
}

// Shared state for building one feature along Q sensitivity directions.
struct Builder {
  const Pose& pose;
  const Twist& twist;
  const PoseSensitivity& sens;
  Mat3 R;
  int q;

  // Total derivative of a body-fixed point with body-frame offset `local`.
  Mat3X body_point_derivative(const Vec3& local, const Mat3X& dlocal) const {
    const Vec3 w = R * local;
    return sens.dposition - so3::skew(w) * sens.drotation + R * pad(dlocal, q);
  }

  Vec3 body_velocity(const Vec3& point) const {
    return twist.tail<3>() + twist.head<3>().cross(point - pose.position);
  }

  void finish(ContactFeature& f) const {
    std::tie(f.t1, f.t2) = tangent_basis(f.n);
    // Derivative of the Gram-Schmidt construction (the seed axis is fixed).
    int axis = 0;
    f.n.cwiseAbs().minCoeff(&axis);
    const Vec3 a = Vec3::Unit(axis);
    const Vec3 u = a - a.dot(f.n) * f.n;
    const Mat3X du = -f.n * (a.transpose() * f.dn_dtheta) - a.dot(f.n) * f.dn_dtheta;
    f.dt1_dtheta = (Mat3::Identity() - f.t1 * f.t1.transpose()) * du / u.norm();
    f.dt2_dtheta = -so3::skew(f.t1) * f.dn_dtheta + so3::skew(f.n) * f.dt1_dtheta;
    f.dlever_dtheta = f.dpB_dtheta - sens.dposition;
    f.vA = Vec3::Zero();
    f.vB = body_velocity(f.pB);
  }

  // Body vertex against a plane through `point` with constant normal `n`.
  ContactFeature vertex_plane(PairId id, const BodyVertex& v, const Vec3& point,
                              const Mat3X& dpoint, const Vec3& n) const {
    ContactFeature f;
    f.id = id;
    f.n = n;
    f.pB = pose.transform(v.local);
    f.dpB_dtheta = body_point_derivative(v.local, v.dlocal);
    f.gap = n.dot(f.pB - point);
    f.dgap_dtheta = n.transpose() * (f.dpB_dtheta - pad(dpoint, q));
    f.pA = f.pB - f.gap * n;
    f.dpA_dtheta = f.dpB_dtheta - n * f.dgap_dtheta;
    f.dn_dtheta = Mat3X::Zero(3, q);
    finish(f);
    return f;
  }

  // Pillar corner against the body's bottom face.
  ContactFeature corner_face(PairId id, const Vec3& corner, const Mat3X& dcorner,
                             const BodyFace& face) const {
    ContactFeature f;
    f.id = id;
    f.n = -(R * face.outward_normal);
    f.dn_dtheta = -so3::skew(f.n) * sens.drotation;
    const Vec3 center = pose.transform(face.center);
    const Mat3X dcenter = body_point_derivative(face.center, face.dcenter);
    const Mat3X dc = pad(dcorner, q);
    f.gap = f.n.dot(center - corner);
    f.dgap_dtheta = (center - corner).transpose() * f.dn_dtheta +
                    f.n.transpose() * (dcenter - dc);
    f.pA = corner;
    f.dpA_dtheta = dc;
    f.pB = corner + f.gap * f.n;
    f.dpB_dtheta = dc + f.n * f.dgap_dtheta + f.gap * f.dn_dtheta;
    finish(f);
    return f;
  }
};

bool inside_square(const Vec3& p, const Pillar& pillar) {
  return std::abs(p.x() - pillar.top_center.x()) <= pillar.half_side &&
         std::abs(p.y() - pillar.top_center.y()) <= pillar.half_side;
}

bool inside_face(const Vec3& corner, const Pose& pose, const BodyFace& face) {
  const Vec3 d = pose.orientation.conjugate() * (corner - pose.transform(face.center));
  return std::abs(d.dot(face.axis_u)) <= face.half_u &&
         std::abs(d.dot(face.axis_v)) <= face.half_v;
}

// Visits every geometrically possible pair with a callback producing either
// a gap or a full feature.
template <typename OnVertexPlane, typename OnCornerFace>
void for_each_pair(const ShapeSet& shapes, const Pose& pose,
                   OnVertexPlane on_vertex_plane, OnCornerFace on_corner_face) {
  const int num_planes = static_cast<int>(shapes.planes.size());
  for (int i = 0; i < num_planes; ++i) {
    const HalfSpace& plane = shapes.planes[i];
    for (int k = 0; k < static_cast<int>(shapes.body_vertices.size()); ++k) {
      on_vertex_plane(PairId{PairKind::kVertexPlane, i, k}, shapes.body_vertices[k],
                      plane.point, plane.dpoint, plane.normal);
    }
  }
  for (int j = 0; j < static_cast<int>(shapes.pillars.size()); ++j) {
    const Pillar& pillar = shapes.pillars[j];
    const int primitive = num_planes + j;
    for (int k = 0; k < static_cast<int>(shapes.body_vertices.size()); ++k) {
      const BodyVertex& v = shapes.body_vertices[k];
      if (!inside_square(pose.transform(v.local), pillar)) continue;
      on_vertex_plane(PairId{PairKind::kVertexPillar, primitive, k}, v,
                      pillar.top_center, pillar.dtop_center, Vec3::UnitZ());
    }
    if (!shapes.body_bottom) continue;
    const auto corners = pillar.top_corners();
    for (int c = 0; c < 4; ++c) {
      if (!inside_face(corners[c], pose, *shapes.body_bottom)) continue;
      on_corner_face(PairId{PairKind::kPillarCornerFace, primitive, c}, corners[c],
                     pillar.dtop_center, *shapes.body_bottom);
    }
  }
}

// Signed distance to a prism given the height above its cap and the
// lateral excesses over its half extents.
double prism_distance(double height, double ex, double ey) {
  if (height >= 0.0 || ex > 0.0 || ey > 0.0) {
    const double h = std::max(height, 0.0);
    const double x = std::max(ex, 0.0);
    const double y = std::max(ey, 0.0);
    return std::sqrt(h * h + x * x + y * y);
  }
  return std::max({height, ex, ey});
}

}  // namespace

std::array<Vec3, 4> Pillar::top_corners() const {
  const double h = half_side;
  return {top_center + Vec3(-h, -h, 0.0), top_center + Vec3(h, -h, 0.0),
          top_center + Vec3(-h, h, 0.0), top_center + Vec3(h, h, 0.0)};
}

void ShapeSet::validate() const {
  const auto check_cols = [this](const Mat3X& m, const char* what) {
    if (m.cols() != num_params) {
      throw GeoplaceError(std::string("ShapeSet: derivative width mismatch in ") + what);
    }
  };
  if (num_params < 1) throw GeoplaceError("ShapeSet: num_params must be >= 1");
  if (body_vertices.empty()) throw GeoplaceError("ShapeSet: body has no vertices");
  for (const auto& v : body_vertices) check_cols(v.dlocal, "body vertex");
  for (const auto& p : planes) {
    check_cols(p.dpoint, "plane");
    if (std::abs(p.normal.norm() - 1.0) > 1e-9) throw GeoplaceError("ShapeSet: plane normal not unit");
  }
  for (const auto& p : pillars) {
    check_cols(p.dtop_center, "pillar");
    if (!(p.half_side > 0.0)) throw GeoplaceError("ShapeSet: pillar side must be positive");
  }
  if (body_bottom) {
    check_cols(body_bottom->dcenter, "body face");
    if (!(body_bottom->half_u > 0.0 && body_bottom->half_v > 0.0)) {
      throw GeoplaceError("ShapeSet: body face extents must be positive");
    }
  }
}

ShapeSet ShapeModel::operator()(const GeomParam& theta) const {
  ShapeSet s = build(theta);
  if (s.num_params != theta.size()) {
    throw GeoplaceError("ShapeModel '" + name + "': parameter dimension mismatch");
  }
  s.validate();
  return s;
}

PoseSensitivity PoseSensitivity::zero(int directions) {
  return {Mat3X::Zero(3, directions), Mat3X::Zero(3, directions)};
}

std::pair<Vec3, Vec3> tangent_basis(const Vec3& n) {
  int axis = 0;
  n.cwiseAbs().minCoeff(&axis);
  const Vec3 a = Vec3::Unit(axis);
  const Vec3 t1 = (a - a.dot(n) * n).normalized();
  return {t1, n.cross(t1)};
}

std::vector<ContactFeature> detect_contacts(const ShapeSet& shapes, const Pose& pose,
                                            const Twist& twist,
                                            const PoseSensitivity& sensitivity,
                                            const ContactOptions& options) {
  if (!pose.valid()) throw GeoplaceError("detect_contacts: invalid pose");
  if (sensitivity.directions() != 0 && sensitivity.directions() < shapes.num_params) {
    throw GeoplaceError("detect_contacts: fewer sensitivity directions than parameters");
  }
  const Builder builder{pose, twist, sensitivity, pose.rotation(), sensitivity.directions()};
  std::vector<ContactFeature> out;
  const auto keep = [&](ContactFeature&& f) {
    if (f.gap < -options.penetration_tolerance) {
      throw PenetrationExceeded("penetration of " + std::to_string(-f.gap) +
                                " m exceeds tolerance");
    }
    if (f.gap <= options.contact_tolerance) out.push_back(std::move(f));
  };
  for_each_pair(
      shapes, pose,
      [&](PairId id, const BodyVertex& v, const Vec3& point, const Mat3X& dpoint,
          const Vec3& n) { keep(builder.vertex_plane(id, v, point, dpoint, n)); },
      [&](PairId id, const Vec3& corner, const Mat3X& dcorner, const BodyFace& face) {
        keep(builder.corner_face(id, corner, dcorner, face));
      });
  std::sort(out.begin(), out.end(), [](const ContactFeature& a, const ContactFeature& b) {
    return std::make_tuple(a.id.primitive, a.pB.x(), a.pB.y(), a.pB.z(), a.id.feature) <
           std::make_tuple(b.id.primitive, b.pB.x(), b.pB.y(), b.pB.z(), b.id.feature);
  });
  return out;
}

std::vector<ContactFeature> detect_contacts(const ShapeModel& shapes, const Pose& pose,
                                            const Twist& twist, const GeomParam& theta,
                                            const ContactOptions& options) {
  return detect_contacts(shapes(theta), pose, twist, PoseSensitivity::zero(theta.size()),
                         options);
}

std::vector<PairGap> pair_gaps(const ShapeSet& shapes, const Pose& pose) {
  std::vector<PairGap> out;
  const Mat3 R = pose.rotation();
  const int num_planes = static_cast<int>(shapes.planes.size());
  for (int i = 0; i < num_planes; ++i) {
    const HalfSpace& plane = shapes.planes[i];
    for (int k = 0; k < static_cast<int>(shapes.body_vertices.size()); ++k) {
      const Vec3 p = pose.transform(shapes.body_vertices[k].local);
      out.push_back({PairId{PairKind::kVertexPlane, i, k}, plane.normal.dot(p - plane.point)});
    }
  }
  // Pillar pairs use the signed distance to a half-infinite prism so that the
  // gap stays continuous when a feature leaves the footprint.
  for (int j = 0; j < static_cast<int>(shapes.pillars.size()); ++j) {
    const Pillar& pillar = shapes.pillars[j];
    const int primitive = num_planes + j;
    for (int k = 0; k < static_cast<int>(shapes.body_vertices.size()); ++k) {
      const Vec3 d = pose.transform(shapes.body_vertices[k].local) - pillar.top_center;
      out.push_back({PairId{PairKind::kVertexPillar, primitive, k},
                     prism_distance(d.z(), std::abs(d.x()) - pillar.half_side,
                                    std::abs(d.y()) - pillar.half_side)});
    }
    if (!shapes.body_bottom) continue;
    const BodyFace& face = *shapes.body_bottom;
    const Vec3 n = -(R * face.outward_normal);
    const Vec3 center = pose.transform(face.center);
    const auto corners = pillar.top_corners();
    for (int c = 0; c < 4; ++c) {
      const Vec3 d = pose.orientation.conjugate() * (corners[c] - center);
      out.push_back({PairId{PairKind::kPillarCornerFace, primitive, c},
                     prism_distance(n.dot(center - corners[c]),
                                    std::abs(d.dot(face.axis_u)) - face.half_u,
                                    std::abs(d.dot(face.axis_v)) - face.half_v)});
    }
  }
  return out;
}

double signed_distance(const ShapeModel& shapes, const Pose& pose, const GeomParam& theta) {
  double best = std::numeric_limits<double>::infinity();
  for (const PairGap& g : pair_gaps(shapes(theta), pose)) best = std::min(best, g.gap);
  return best;
}

MatX contact_jacobian(const std::vector<ContactFeature>& features, const Pose& pose) {
  MatX jt(6, 3 * features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    const ContactFeature& f = features[i];
    const Vec3 r = f.pB - pose.position;
    const Vec3 dirs[3] = {f.n, f.t1, f.t2};
    for (int k = 0; k < 3; ++k) {
      jt.col(3 * i + k) << r.cross(dirs[k]), dirs[k];
    }
  }
  return jt;
}

std::pair<Vec6, Mat6X> jacobian_theta_product(const std::vector<ContactFeature>& features,
                                              const Pose& pose, const VecX& z) {
  if (z.size() != 3 * static_cast<Eigen::Index>(features.size())) {
    throw GeoplaceError("jacobian_theta_product: z must have length 3m");
  }
  const int q = features.empty() ? 0 : features.front().num_directions();
  Vec6 value = Vec6::Zero();
  Mat6X dvalue = Mat6X::Zero(6, q);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const ContactFeature& f = features[i];
    const Vec3 r = f.pB - pose.position;
    const Vec3 dirs[3] = {f.n, f.t1, f.t2};
    const Mat3X* ddirs[3] = {&f.dn_dtheta, &f.dt1_dtheta, &f.dt2_dtheta};
    for (int k = 0; k < 3; ++k) {
      const double zi = z[3 * i + k];
      if (zi == 0.0) continue;
      value.head<3>() += r.cross(dirs[k]) * zi;
      value.tail<3>() += dirs[k] * zi;
      dvalue.topRows<3>() +=
          (so3::skew(r) * *ddirs[k] - so3::skew(dirs[k]) * f.dlever_dtheta) * zi;
      dvalue.bottomRows<3>() += *ddirs[k] * zi;
    }
  }
  return {value, dvalue};
}

std::pair<VecX, MatX> jacobian_product_theta(const std::vector<ContactFeature>& features,
                                             const Pose& pose, const Vec6& z) {
  const int q = features.empty() ? 0 : features.front().num_directions();
  const auto m3 = static_cast<Eigen::Index>(3 * features.size());
  VecX value(m3);
  MatX dvalue(m3, q);
  const Vec3 za = z.head<3>();
  const Vec3 zl = z.tail<3>();
  for (std::size_t i = 0; i < features.size(); ++i) {
    const ContactFeature& f = features[i];
    const Vec3 r = f.pB - pose.position;
    const Vec3 dirs[3] = {f.n, f.t1, f.t2};
    const Mat3X* ddirs[3] = {&f.dn_dtheta, &f.dt1_dtheta, &f.dt2_dtheta};
    for (int k = 0; k < 3; ++k) {
      const auto row = static_cast<Eigen::Index>(3 * i + k);
      // (r x d).za = (d x za).r = (za x r).d
      value[row] = r.cross(dirs[k]).dot(za) + dirs[k].dot(zl);
      dvalue.row(row) = dirs[k].cross(za).transpose() * f.dlever_dtheta +
                        za.cross(r).transpose() * *ddirs[k] + zl.transpose() * *ddirs[k];
    }
  }
  return {value, dvalue};
}

}  // namespace geoplace::geometry
