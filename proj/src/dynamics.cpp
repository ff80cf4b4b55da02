#include "geoplace/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <Eigen/Cholesky>

#include "geoplace/so3.hpp"

namespace geoplace::dynamics {

using geometry::ContactFeature;
using geometry::PairId;
using geometry::PoseSensitivity;
using geometry::ShapeSet;

namespace {

Mat6 inverse_mass(const BodyModel& model) {
  Mat6 w = Mat6::Zero();
  w.topLeftCorner<3, 3>() = model.inertia.inverse();
  w.bottomRightCorner<3, 3>() = Mat3::Identity() / model.mass;
  return w;
}

bool spd(const MatX& m) {
  if (!m.isApprox(m.transpose(), 1e-12)) return false;
  Eigen::LLT<MatX> llt(m);
  return llt.info() == Eigen::Success;
}

// Restrict a feature's derivative blocks to the first `p` directions.
ContactFeature leading_directions(const ContactFeature& f, int p) {
  ContactFeature out = f;
  out.dpA_dtheta = f.dpA_dtheta.leftCols(p);
  out.dpB_dtheta = f.dpB_dtheta.leftCols(p);
  out.dn_dtheta = f.dn_dtheta.leftCols(p);
  out.dt1_dtheta = f.dt1_dtheta.leftCols(p);
  out.dt2_dtheta = f.dt2_dtheta.leftCols(p);
  out.dgap_dtheta = f.dgap_dtheta.leftCols(p);
  out.dlever_dtheta = f.dlever_dtheta.leftCols(p);
  return out;
}

StateSensitivity augment(const StateSensitivity& s) {
  const int p = s.directions();
  StateSensitivity a = StateSensitivity::zero(p + 1);
  a.dposition.leftCols(p) = s.dposition;
  a.drotation.leftCols(p) = s.drotation;
  a.dtwist.leftCols(p) = s.dtwist;
  return a;
}

// Folds the duration column (last) into the parameter columns.
StateSensitivity collapse(const StateSensitivity& s, const RowX& dduration) {
  const int p = s.directions() - 1;
  StateSensitivity c;
  c.dposition = s.dposition.leftCols(p) + s.dposition.col(p) * dduration;
  c.drotation = s.drotation.leftCols(p) + s.drotation.col(p) * dduration;
  c.dtwist = s.dtwist.leftCols(p) + s.dtwist.col(p) * dduration;
  return c;
}

}  // namespace

void BodyModel::validate() const {
  if (!(mass > 0.0)) throw GeoplaceError("BodyModel: mass must be positive");
  if (!spd(inertia)) throw GeoplaceError("BodyModel: inertia must be SPD");
  if (!spd(stiffness)) throw GeoplaceError("BodyModel: stiffness must be SPD");
  if (!(dt > 0.0)) throw GeoplaceError("BodyModel: dt must be positive");
  if (friction < 0.0) throw GeoplaceError("BodyModel: friction must be >= 0");
}

BodyModel make_body_model(double mass, double rot_inertia, double rot_stiffness,
                          double lin_stiffness, double damping_ratio, double dt) {
  BodyModel m;
  m.mass = mass;
  m.inertia = Mat3::Identity() * rot_inertia;
  m.dt = dt;
  m.stiffness.diagonal() << Vec3::Constant(rot_stiffness), Vec3::Constant(lin_stiffness);
  const double d_rot = 2.0 * damping_ratio * std::sqrt(rot_stiffness * rot_inertia);
  const double d_lin = 2.0 * damping_ratio * std::sqrt(lin_stiffness * mass);
  m.damping.diagonal() << Vec3::Constant(d_rot), Vec3::Constant(d_lin);
  m.validate();
  return m;
}

StateSensitivity StateSensitivity::zero(int directions) {
  return {Mat3X::Zero(3, directions), Mat3X::Zero(3, directions),
          Mat6X::Zero(6, directions)};
}

Wrench control_wrench(const Action& action, const RobotState& state,
                      const BodyModel& model) {
  Vec6 error;
  error << so3::log(action.reference.orientation * state.pose.orientation.conjugate()),
      action.reference.position - state.pose.position;
  return Wrench::from_stacked(model.stiffness * error - model.damping * state.twist);
}

Mat6X control_wrench_sensitivity(const Action& action, const RobotState& state,
                                 const StateSensitivity& sens, const BodyModel& model) {
  const Vec3 rot_error =
      so3::log(action.reference.orientation * state.pose.orientation.conjugate());
  const Mat3 jr = so3::left_jacobian(rot_error).transpose();
  Mat6X derror(6, sens.directions());
  derror.topRows<3>() = -jr.inverse() * sens.drotation;
  derror.bottomRows<3>() = -sens.dposition;
  return model.stiffness * derror - model.damping * sens.dtwist;
}

StepFreeResult advance(const ShapeSet& shapes, const BodyModel& model,
                       const RobotState& state, const StateSensitivity& sens,
                       const Wrench& control, const Mat6X& dcontrol, double h,
                       const RowX& dh) {
  if (!(h > 0.0)) throw GeoplaceError("advance: duration must be positive");
  const int q = sens.directions();
  const Pose& pose = state.pose;

  StepFreeResult out;
  out.features = geometry::detect_contacts(
      shapes, pose, state.twist, PoseSensitivity{sens.dposition, sens.drotation},
      model.contact);
  const auto& features = out.features;

  const Mat6 W = inverse_mass(model);
  Vec6 load = control.stacked();
  load.tail<3>() += model.mass * model.gravity;
  const Vec6 vfree = state.twist + h * W * load;
  Mat6X dvfree = sens.dtwist + h * W * dcontrol;
  if (q > 0) dvfree += W * load * dh;

  Vec6 vnew = vfree;
  Mat6X dvnew = dvfree;
  out.dcontact_impulse = Mat6X::Zero(6, q);
  const auto m = static_cast<Eigen::Index>(features.size());
  if (m > 0) {
    const MatX D = geometry::contact_jacobian(features, pose).transpose();  // 3m x 6
    std::vector<MatX> dD(q, MatX::Zero(3 * m, 6));
    for (Eigen::Index i = 0; i < m; ++i) {
      const ContactFeature& f = features[i];
      const Vec3 r = f.pB - pose.position;
      const Vec3 dirs[3] = {f.n, f.t1, f.t2};
      const Mat3X* ddirs[3] = {&f.dn_dtheta, &f.dt1_dtheta, &f.dt2_dtheta};
      for (int k = 0; k < 3; ++k) {
        const Mat3X dang = so3::skew(r) * *ddirs[k] - so3::skew(dirs[k]) * f.dlever_dtheta;
        for (int c = 0; c < q; ++c) {
          dD[c].block<1, 3>(3 * i + k, 0) = dang.col(c).transpose();
          dD[c].block<1, 3>(3 * i + k, 3) = ddirs[k]->col(c).transpose();
        }
      }
    }

    // z -> impulse map L, constraint-row selector B, constant coupling K and
    // gap offsets c0: a = B D v' + K z + c0 with v' = vfree + W D^T L z.
    const bool friction = model.friction > 0.0;
    const Eigen::Index nz = friction ? 7 * m : m;
    MatX L = MatX::Zero(3 * m, nz);
    MatX B = MatX::Zero(nz, 3 * m);
    MatX K = MatX::Zero(nz, nz);
    VecX c0 = VecX::Zero(nz);
    MatX dc0 = MatX::Zero(nz, q);
    for (Eigen::Index i = 0; i < m; ++i) {
      const ContactFeature& f = features[i];
      L(3 * i, i) = 1.0;
      B(i, 3 * i) = 1.0;
      c0[i] = f.gap / h;
      if (q > 0) dc0.row(i) = f.dgap_dtheta / h - (f.gap / (h * h)) * dh;
      if (!friction) continue;
      for (int k = 0; k < 2; ++k) {
        const Eigen::Index bp = m + 2 * i + k;
        const Eigen::Index bm = 3 * m + 2 * i + k;
        const Eigen::Index g = 5 * m + 2 * i + k;
        L(3 * i + 1 + k, bp) = 1.0;
        L(3 * i + 1 + k, bm) = -1.0;
        B(bp, 3 * i + 1 + k) = 1.0;
        B(bm, 3 * i + 1 + k) = -1.0;
        K(bp, g) = 1.0;
        K(bm, g) = 1.0;
        K(g, i) = model.friction;
        K(g, bp) = -1.0;
        K(g, bm) = -1.0;
      }
    }

    const MatX WDt = W * D.transpose();
    lcp::LcpProblem problem{B * (D * WDt) * L + K, B * (D * vfree) + c0};
    const lcp::LcpSolution sol = lcp::lcp_solve_regularized(problem);
    out.impulse = L * sol.lambda;
    out.dimpulse = MatX::Zero(3 * m, q);
    if (q > 0) {
      std::vector<MatX> dM(q);
      MatX db(nz, q);
      for (int c = 0; c < q; ++c) {
        const MatX dG = dD[c] * WDt + WDt.transpose() * dD[c].transpose();
        dM[c] = B * dG * L;
        db.col(c) = B * (dD[c] * vfree + D * dvfree.col(c)) + dc0.col(c);
      }
      lcp::LcpGradientOptions gopts;
      gopts.allow_singular = true;
      const MatX dz = lcp::lcp_gradient(problem, sol, dM, db, gopts, &out.singular_block);
      out.dimpulse = L * dz;
    }
    auto [wrench, dwrench] = geometry::jacobian_theta_product(features, pose, out.impulse);
    out.contact_impulse = wrench;
    if (q > 0) out.dcontact_impulse = dwrench + D.transpose() * out.dimpulse;
    vnew = vfree + W * out.contact_impulse;
    dvnew = dvfree + W * out.dcontact_impulse;
  }

  const Vec3 omega = vnew.head<3>();
  const Vec3 vlin = vnew.tail<3>();
  const Vec3 phi = h * omega;
  const Quat e = so3::exp(phi);
  out.state.twist = vnew;
  out.state.pose.position = pose.position + h * vlin;
  out.state.pose.orientation = (e * pose.orientation).normalized();

  out.sens.dtwist = dvnew;
  out.sens.dposition = sens.dposition + h * dvnew.bottomRows<3>();
  out.sens.drotation = e.toRotationMatrix() * sens.drotation +
                       so3::left_jacobian(phi) * (h * dvnew.topRows<3>());
  if (q > 0) {
    out.sens.dposition += vlin * dh;
    out.sens.drotation += so3::left_jacobian(phi) * omega * dh;
  }
  return out;
}

StepFreeResult step_free(const geometry::ShapeModel& shapes, const BodyModel& model,
                         const RobotState& state, const Wrench& control, double h,
                         const GeomParam& theta) {
  const int p = theta.size();
  return advance(shapes(theta), model, state, StateSensitivity::zero(p), control,
                 Mat6X::Zero(6, p), h, RowX::Zero(p));
}

std::optional<TimeOfImpact> detect_toi(const ShapeSet& shapes, const BodyModel& model,
                                       const RobotState& state, const Wrench& control,
                                       double h) {
  std::set<PairId> touching;
  for (const auto& g : geometry::pair_gaps(shapes, state.pose)) {
    if (g.gap <= model.contact.contact_tolerance) touching.insert(g.id);
  }
  const auto none = StateSensitivity::zero(0);
  const Mat6X no_control(6, 0);
  const RowX no_dh(0);
  // Minimum gap at time tau over pairs not touching at the start.
  const auto new_gap = [&](double tau, PairId* which) {
    const auto r = advance(shapes, model, state, none, control, no_control, tau, no_dh);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& g : geometry::pair_gaps(shapes, r.state.pose)) {
      if (touching.count(g.id) || g.gap >= best) continue;
      best = g.gap;
      if (which) *which = g.id;
    }
    return best;
  };

  PairId pair;
  if (new_gap(h, &pair) > 0.0) return std::nullopt;
  double lo = 0.0;
  double hi = h;
  for (int it = 0; it < 200 && hi - lo > model.toi_tolerance; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (new_gap(mid, nullptr) <= 0.0) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  new_gap(hi, &pair);
  return TimeOfImpact{hi, pair};
}

std::optional<TimeOfImpact> detect_toi(const geometry::ShapeModel& shapes,
                                       const BodyModel& model, const RobotState& state,
                                       const Wrench& control, double h,
                                       const GeomParam& theta) {
  return detect_toi(shapes(theta), model, state, control, h);
}

RowX toi_gradient(const ContactFeature& feature, double v_n, double grazing_speed) {
  if (std::abs(v_n) <= grazing_speed) {
    throw GrazingImpact("toi_gradient: relative normal velocity too small");
  }
  return -(feature.n.transpose() * (feature.dpB_dtheta - feature.dpA_dtheta)) / v_n;
}

StepResult step(const geometry::ShapeModel& shapes_model, const BodyModel& model,
                const RobotState& state, const StateSensitivity& sens,
                const Action& action, const GeomParam& theta, const StepOptions& options) {
  const int p = theta.size();
  const ShapeSet shapes = shapes_model(theta);
  const bool sensitive = options.sensitivities;
  if (sensitive && sens.directions() != p) {
    throw GeoplaceError("step: state sensitivity must have P columns");
  }

  const Wrench control = control_wrench(action, state, model);
  const Mat6X dcontrol =
      sensitive ? control_wrench_sensitivity(action, state, sens, model) : Mat6X(6, 0);
  Mat6X dcontrol_aug = Mat6X::Zero(6, sensitive ? p + 1 : 0);
  if (sensitive) dcontrol_aug.leftCols(p) = dcontrol;
  RowX dh_aug = RowX::Zero(sensitive ? p + 1 : 0);
  if (sensitive) dh_aug[p] = 1.0;

  StepResult out;
  RobotState cur = state;
  StateSensitivity cur_sens = sensitive ? sens : StateSensitivity::zero(0);
  double remaining = model.dt;
  RowX dremaining = RowX::Zero(p);
  Vec6 impulse = Vec6::Zero();
  Mat6X dimpulse = Mat6X::Zero(6, p);

  for (int split = 0;; ++split) {
    std::optional<TimeOfImpact> toi;
    if (split < model.max_toi_splits) {
      toi = detect_toi(shapes, model, cur, control, remaining);
      if (toi && toi->time >= remaining) toi.reset();
    }
    const double duration = toi ? toi->time : remaining;
    if (toi) out.impact_pairs.push_back(toi->pair);

    StepFreeResult r;
    if (sensitive) {
      r = advance(shapes, model, cur, augment(cur_sens), control, dcontrol_aug, duration,
                  dh_aug);
      RowX dduration = dremaining;
      if (toi) {
        const auto impact = geometry::detect_contacts(
            shapes, r.state.pose, r.state.twist,
            PoseSensitivity{r.sens.dposition, r.sens.drotation}, model.contact);
        dduration = RowX::Zero(p);
        for (const auto& f : impact) {
          if (f.id != toi->pair) continue;
          try {
            dduration = toi_gradient(leading_directions(f, p), f.dgap_dtheta[p],
                                     model.grazing_speed);
          } catch (const GrazingImpact&) {
            ++out.grazing_impacts;
          }
          break;
        }
      }
      cur_sens = collapse(r.sens, dduration);
      dimpulse += r.dcontact_impulse.leftCols(p) + r.dcontact_impulse.col(p) * dduration;
      if (toi) dremaining -= dduration;
    } else {
      r = advance(shapes, model, cur, cur_sens, control, Mat6X(6, 0), duration, RowX(0));
    }
    impulse += r.contact_impulse;
    out.singular_block = out.singular_block || r.singular_block;
    std::vector<PairId> mode;
    for (std::size_t i = 0; i < r.features.size(); ++i) {
      if (r.impulse[3 * i] > 1e-10) mode.push_back(r.features[i].id);
    }
    out.contact_modes.push_back(std::move(mode));
    cur = r.state;
    ++out.substeps;
    if (!toi) break;
    remaining -= duration;
  }

  out.state = cur;
  out.sens = sensitive ? cur_sens : StateSensitivity::zero(0);
  out.wrench.value = Wrench::from_stacked(impulse / model.dt);
  out.wrench.dvalue_dtheta = sensitive ? Mat6X(dimpulse / model.dt) : Mat6X::Zero(6, p);
  return out;
}

StepResult step(const geometry::ShapeModel& shapes, const BodyModel& model,
                const RobotState& state, const Action& action, const GeomParam& theta,
                const StepOptions& options) {
  return step(shapes, model, state, StateSensitivity::zero(theta.size()), action, theta,
              options);
}

double kinetic_energy(const RobotState& state, const BodyModel& model) {
  const Vec3 w = state.twist.head<3>();
  const Vec3 v = state.twist.tail<3>();
  return 0.5 * (w.dot(model.inertia * w) + model.mass * v.squaredNorm());
}

}  // namespace geoplace::dynamics
