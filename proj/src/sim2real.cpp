#include "sitl/sim2real.hpp"

#include "sitl/error.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <fstream>

namespace sitl {

namespace {

double geodesic_angle(const Rotation& a, const Rotation& b) {
  const double tr = (a.matrix().transpose() * b.matrix()).trace();
  return std::acos(std::clamp((tr - 1.0) / 2.0, -1.0, 1.0));
}

Pose apply_twist(const Pose& p, const Eigen::Matrix<double, 6, 1>& d) {
  Twist t;
  t.linear = Vec3(d(0), d(1), d(2));
  t.angular = Vec3(d(3), d(4), d(5));
  return p * se3_exp(t);
}

struct Params {
  Pose u, v;
};

Params perturb(const Params& p, const Eigen::Matrix<double, 12, 1>& d) {
  return {apply_twist(p.u, d.head<6>()), apply_twist(p.v, d.tail<6>())};
}

// The exact objective of the calibration.
double loss_of(const std::vector<CalibrationPair>& pairs, const Params& p,
               double zeta) {
  double loss = 0.0;
  for (const auto& pair : pairs) {
    const Pose corrected = p.u * pair.estimate * p.v;
    loss += (pair.ground_truth.translation - corrected.translation).norm() +
            zeta * geodesic_angle(pair.ground_truth.rotation, corrected.rotation);
  }
  return loss;
}

// Generic LM driver over the 12 twist parameters. `fill` writes the residual
// vector for a parameter set; stall counting spans the whole stage.
template <typename Fill>
Params levenberg_marquardt(const std::vector<CalibrationPair>& pairs,
                           Params p, int residual_dim, const Fill& fill,
                           int max_iters, int* stall_budget) {
  const int m = residual_dim * static_cast<int>(pairs.size());
  Eigen::VectorXd r(m), rp(m), rm(m), rt(m);
  fill(p, r);
  double cost = r.squaredNorm();
  double lambda = 1e-6;

  for (int it = 0; it < max_iters; ++it) {
    Eigen::MatrixXd jac(m, 12);
    for (int col = 0; col < 12; ++col) {
      Eigen::Matrix<double, 12, 1> d = Eigen::Matrix<double, 12, 1>::Zero();
      const double step = 1e-7;
      d(col) = step;
      fill(perturb(p, d), rp);
      d(col) = -step;
      fill(perturb(p, d), rm);
      jac.col(col) = (rp - rm) / (2 * step);
    }
    const Eigen::Matrix<double, 12, 12> jtj = jac.transpose() * jac;
    const Eigen::Matrix<double, 12, 1> g = jac.transpose() * r;

    bool accepted = false;
    for (int attempt = 0; attempt < 12; ++attempt) {
      Eigen::Matrix<double, 12, 12> lhs = jtj;
      lhs.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
      const Eigen::Matrix<double, 12, 1> delta = -lhs.ldlt().solve(g);
      if (!delta.allFinite()) break;
      const Params trial = perturb(p, delta);
      fill(trial, rt);
      const double trial_cost = rt.squaredNorm();
      if (trial_cost < cost) {
        p = trial;
        r = rt;
        const double improvement = cost - trial_cost;
        cost = trial_cost;
        lambda = std::max(lambda * 0.3, 1e-12);
        accepted = true;
        *stall_budget = 20;  // reset the stall counter on any decrease
        if (delta.norm() < 1e-10 || improvement < 1e-16) return p;
        break;
      }
      lambda *= 8.0;
    }
    if (!accepted) {
      if (--(*stall_budget) <= 0) {
        if (cost > 1e-12)
          throw NonConvergence("loss stalled for 20 iterations at cost " +
                               std::to_string(cost));
        return p;
      }
      if (lambda > 1e12) return p;  // fully damped: a (local) minimum
    }
  }
  return p;
}

}  // namespace

double calibration_loss(const std::vector<CalibrationPair>& pairs,
                        const Pose& u, const Pose& v, double zeta) {
  return loss_of(pairs, {u, v}, zeta);
}

Sim2RealCorrection calibrate(const std::vector<CalibrationPair>& pairs,
                             double zeta) {
  if (pairs.size() < 4)
    throw DegenerateSet("calibration needs >= 4 pose pairs");

  // rotational diversity: relative rotations must span at least two axes,
  // otherwise U and V are not separable
  {
    std::vector<Vec3> axes;
    for (std::size_t i = 1; i < pairs.size(); ++i) {
      const Vec3 aa = axis_angle(pairs[0].estimate.rotation.conjugate() *
                                 pairs[i].estimate.rotation);
      if (aa.norm() > deg2rad(0.5)) axes.push_back(aa.normalized());
    }
    bool diverse = false;
    if (axes.size() >= 2) {
      Eigen::MatrixXd m(3, axes.size());
      for (std::size_t i = 0; i < axes.size(); ++i) m.col(i) = axes[i];
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
      diverse = svd.singularValues()(1) > 0.1;
    }
    if (!diverse)
      throw DegenerateSet("estimate rotations do not span two axes");
  }

  Params p{Pose::identity(), Pose::identity()};
  int stall_budget = 20;

  // stage 1: smooth squared surrogate (translation and scaled axis-angle
  // residuals) to land in the basin
  auto fill_smooth = [&](const Params& q, Eigen::VectorXd& out) {
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const Pose corrected = q.u * pairs[i].estimate * q.v;
      const Vec3 dt = pairs[i].ground_truth.translation - corrected.translation;
      const Vec3 dr = axis_angle(corrected.rotation.conjugate() *
                                 pairs[i].ground_truth.rotation);
      out.segment<3>(6 * i) = dt;
      out.segment<3>(6 * i + 3) = zeta * dr;
    }
  };
  p = levenberg_marquardt(pairs, p, 6, fill_smooth, 120, &stall_budget);

  // stage 2: the exact objective; sqrt residuals make the LM squared norm
  // equal the stated loss
  auto fill_exact = [&](const Params& q, Eigen::VectorXd& out) {
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const Pose corrected = q.u * pairs[i].estimate * q.v;
      const double dt =
          (pairs[i].ground_truth.translation - corrected.translation).norm();
      const double dr =
          geodesic_angle(pairs[i].ground_truth.rotation, corrected.rotation);
      out(2 * i) = std::sqrt(std::max(dt, 1e-18));
      out(2 * i + 1) = std::sqrt(std::max(zeta * dr, 1e-18));
    }
  };
  stall_budget = 20;
  p = levenberg_marquardt(pairs, p, 2, fill_exact, 80, &stall_budget);

  Sim2RealCorrection c;
  c.world_from_virtual = p.u;
  c.probe_from_probe_sim = p.v;
  c.final_loss = loss_of(pairs, p, zeta);
  c.pair_count = static_cast<int>(pairs.size());
  c.zeta = zeta;
  return c;
}

Pose apply_correction(const Sim2RealCorrection& c, const Pose& estimate) {
  return c.world_from_virtual * estimate * c.probe_from_probe_sim;
}

namespace {

nlohmann::ordered_json pose_json(const Pose& p) {
  return {{"xyz_m", {p.translation.x(), p.translation.y(), p.translation.z()}},
          {"quat_wxyz",
           {p.rotation.w, p.rotation.x, p.rotation.y, p.rotation.z}}};
}

Pose pose_from(const nlohmann::ordered_json& j) {
  Pose p;
  p.translation = Vec3(j.at("xyz_m").at(0), j.at("xyz_m").at(1),
                       j.at("xyz_m").at(2));
  p.rotation = Rotation{j.at("quat_wxyz").at(0), j.at("quat_wxyz").at(1),
                        j.at("quat_wxyz").at(2), j.at("quat_wxyz").at(3)}
                   .normalized();
  return p;
}

}  // namespace

void save_correction(const std::filesystem::path& file,
                     const Sim2RealCorrection& c) {
  nlohmann::ordered_json j;
  j["world_from_virtual"] = pose_json(c.world_from_virtual);
  j["probe_from_probe_sim"] = pose_json(c.probe_from_probe_sim);
  j["zeta"] = c.zeta;
  j["final_loss"] = c.final_loss;
  j["pair_count"] = c.pair_count;
  std::ofstream out(file);
  if (!out) throw IoError("cannot open " + file.string() + " for writing");
  out << j.dump(2) << "\n";
}

Sim2RealCorrection load_correction(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  nlohmann::ordered_json j;
  in >> j;
  Sim2RealCorrection c;
  c.world_from_virtual = pose_from(j.at("world_from_virtual"));
  c.probe_from_probe_sim = pose_from(j.at("probe_from_probe_sim"));
  c.zeta = j.at("zeta");
  c.final_loss = j.at("final_loss");
  c.pair_count = j.at("pair_count");
  return c;
}

}  // namespace sitl
