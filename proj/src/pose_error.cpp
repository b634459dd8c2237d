#include "sitl/pose_error.hpp"

#include "sitl/error.hpp"
#include "sitl/registration.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace sitl {

namespace {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

// Model matrix of the optimization objective: K R^T (I + t n^T / d) K^-1.
Mat3 model_matrix(const Mat3& k, const Mat3& kinv, const Mat3& r_mat,
                  const Vec3& t, const Vec3& n, double d) {
  return k * r_mat.transpose() *
         (Mat3::Identity() + t * n.transpose() / d) * kinv;
}

// Closed-form optimal scale: argmin_xi |H - xi*P|_F.
double optimal_scale(const Mat3& h, const Mat3& p) {
  const double denom = (p.array() * p.array()).sum();
  if (denom < 1e-18) return 1.0;
  return (h.array() * p.array()).sum() / denom;
}

double frobenius_residual(const Mat3& h, const Mat3& p) {
  const double xi = optimal_scale(h, p);
  return (h - xi * p).norm() / h.norm();
}

struct Candidate {
  Rotation rotation;
  Vec3 translation;
  double residual = 1e30;
};

// One analytic extraction: given the scale-normalized Euclidean matrix
// A = R^T + (R^T t / d) n^T and the known plane normal, solve
// u = t/d from the quadratic in alpha and reconstruct R.
bool extract_candidate(const Mat3& a, const Vec3& n, double d, double alpha,
                       const Vec3& u_perp, const Mat3& h, const Mat3& k,
                       const Mat3& kinv, Candidate& out) {
  const Vec3 u = alpha * n + u_perp;
  if (1.0 + n.dot(u) <= 1e-9) return false;  // improper / behind the plane
  const Mat3 m = Mat3::Identity() + u * n.transpose();
  const Mat3 q_raw = a * m.inverse();
  // project to SO(3)
  Eigen::JacobiSVD<Mat3> svd(q_raw, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 q = svd.matrixU() * svd.matrixV().transpose();
  if (q.determinant() < 0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1;
    q = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  out.rotation = Rotation::from_matrix(q.transpose());  // A carries R^T
  out.translation = d * u;
  out.residual = frobenius_residual(
      h, model_matrix(k, kinv, out.rotation.matrix(), out.translation, n, d));
  return true;
}

// Line-searched Gauss-Newton on the 6-dim pose; xi re-solved in closed form
// at every evaluation, so the residual never increases.
void polish(Candidate& c, const Mat3& h, const Mat3& k, const Mat3& kinv,
            const Vec3& n, double d, int max_iters) {
  auto eval = [&](const Rotation& r, const Vec3& t) {
    return frobenius_residual(h, model_matrix(k, kinv, r.matrix(), t, n, d));
  };
  double cost = c.residual;
  for (int it = 0; it < max_iters; ++it) {
    // numeric Jacobian of the 9-vector residual wrt (omega, dt)
    const double xi0 =
        optimal_scale(h, model_matrix(k, kinv, c.rotation.matrix(),
                                      c.translation, n, d));
    auto vec_residual = [&](const Rotation& r, const Vec3& t,
                            Eigen::Matrix<double, 9, 1>& out) {
      const Mat3 p = model_matrix(k, kinv, r.matrix(), t, n, d);
      const Mat3 diff = h / h.norm() - optimal_scale(h / h.norm(), p) * p;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out(3 * i + j) = diff(i, j);
    };
    Eigen::Matrix<double, 9, 1> r0, rp, rm;
    vec_residual(c.rotation, c.translation, r0);
    Eigen::Matrix<double, 9, 6> jac;
    const double step = 1e-6;
    for (int p = 0; p < 6; ++p) {
      Vec3 dw = Vec3::Zero(), dt = Vec3::Zero();
      if (p < 3)
        dw[p] = step;
      else
        dt[p - 3] = step;
      const Rotation rp_rot = c.rotation * Rotation::from_axis_angle(dw);
      const Rotation rm_rot = c.rotation * Rotation::from_axis_angle(-dw);
      vec_residual(rp_rot, c.translation + dt, rp);
      vec_residual(rm_rot, c.translation - dt, rm);
      jac.col(p) = (rp - rm) / (2 * step);
    }
    const Eigen::Matrix<double, 6, 6> jtj = jac.transpose() * jac;
    const Eigen::Matrix<double, 6, 1> g = jac.transpose() * r0;
    Eigen::Matrix<double, 6, 1> delta =
        (jtj + 1e-12 * Eigen::Matrix<double, 6, 6>::Identity()).ldlt().solve(g);

    // backtracking line search keeps the polish monotone
    bool improved = false;
    for (int half = 0; half < 8; ++half) {
      const Vec3 dw(-delta(0), -delta(1), -delta(2));
      const Vec3 dt(-delta(3), -delta(4), -delta(5));
      const Rotation r_try = c.rotation * Rotation::from_axis_angle(dw);
      const Vec3 t_try = c.translation + dt;
      const double cost_try = eval(r_try, t_try);
      if (cost_try < cost) {
        c.rotation = r_try;
        c.translation = t_try;
        cost = cost_try;
        improved = true;
        break;
      }
      delta *= 0.5;
    }
    if (!improved || cost < 1e-15) break;
    (void)xi0;
  }
  c.residual = cost;
}

}  // namespace

FeatureError decompose_homography(const Homography& hom, const Intrinsics& k,
                                  const PlaneInCamera& plane) {
  if (plane.distance <= 0.0) throw DecompositionFailed("plane distance <= 0");
  const Mat3 K = k.matrix();
  const Mat3 Kinv = K.inverse();
  const Mat3 b = Kinv * hom.h * K;

  Eigen::JacobiSVD<Mat3> svd(b);
  const double sigma2 = svd.singularValues()(1);
  if (sigma2 < 1e-12)
    throw DecompositionFailed("homography is rank-deficient after K strip");

  // scale-normalized Euclidean part; sign fixed by positive depth along the
  // principal ray
  Mat3 a = b / sigma2;
  const Vec3 principal = Kinv * Vec3(k.cx, k.cy, 1.0);
  if ((a * principal).z() < 0) a = -a;

  const Vec3& n = plane.normal;
  const Mat3 s = a.transpose() * a - Mat3::Identity();
  const Vec3 sn = s * n;
  const double nsn = n.dot(sn);
  const Vec3 u_perp = sn - nsn * n;
  const double disc = std::max(0.0, 1.0 + nsn - u_perp.squaredNorm());
  const double root = std::sqrt(disc);

  Candidate best;
  for (const double alpha : {-1.0 + root, -1.0 - root}) {
    Candidate c;
    if (!extract_candidate(a, n, plane.distance, alpha, u_perp, hom.h, K, Kinv, c))
      continue;
    polish(c, hom.h, K, Kinv, n, plane.distance, 10);
    if (c.residual < best.residual) best = c;
  }

  if (best.residual > 1e-3)
    throw DecompositionFailed("no candidate fits: residual " +
                              std::to_string(best.residual));

  FeatureError e;
  e.translation = best.translation;
  e.rotation = axis_angle(best.rotation);
  e.scale = sigma2;
  return e;
}

double decomposition_residual(const Homography& h, const Intrinsics& k,
                              const PlaneInCamera& plane,
                              const FeatureError& e) {
  const Mat3 K = k.matrix();
  return frobenius_residual(
      h.h, model_matrix(K, K.inverse(),
                        Rotation::from_axis_angle(e.rotation).matrix(),
                        e.translation, plane.normal, plane.distance));
}

Pose planar_pnp(const std::vector<Vec2>& plane_points_m,
                const std::vector<Vec2>& pixels, const Intrinsics& k) {
  const std::size_t n = plane_points_m.size();
  if (n < 4 || pixels.size() != n)
    throw DegenerateConfiguration("planar PnP needs >= 4 point pairs");

  // collinearity check on the plane points
  bool spread = false;
  for (std::size_t i = 2; i < n && !spread; ++i) {
    const Vec2 d1 = plane_points_m[1] - plane_points_m[0];
    const Vec2 d2 = plane_points_m[i] - plane_points_m[0];
    spread = std::abs(d1.x() * d2.y() - d1.y() * d2.x()) > 1e-12;
  }
  if (!spread) throw DegenerateConfiguration("plane points are collinear");

  // homography plane->pixels, then H ~ K [r1 r2 t]
  const Mat3 h = dlt_homography(plane_points_m, pixels);
  const Mat3 m = k.matrix().inverse() * h;
  const double lambda = 2.0 / (m.col(0).norm() + m.col(1).norm());
  Vec3 r1 = lambda * m.col(0);
  Vec3 r2 = lambda * m.col(1);
  Vec3 t = lambda * m.col(2);
  if (t.z() < 0) {  // plane must lie in front of the camera
    r1 = -r1;
    r2 = -r2;
    t = -t;
  }
  Mat3 r_raw;
  r_raw.col(0) = r1;
  r_raw.col(1) = r2;
  r_raw.col(2) = r1.cross(r2);
  Eigen::JacobiSVD<Mat3> svd(r_raw, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }

  Pose cam_from_world{Rotation::from_matrix(r), t};

  // reprojection Gauss-Newton over (omega, dt)
  auto reproject_cost = [&](const Pose& p, Eigen::VectorXd& r_out) {
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 x_cam =
          p.apply(Vec3(plane_points_m[i].x(), plane_points_m[i].y(), 0.0));
      if (x_cam.z() <= 1e-9) return false;
      const Vec2 proj = project(k, x_cam);
      r_out(2 * i) = proj.x() - pixels[i].x();
      r_out(2 * i + 1) = proj.y() - pixels[i].y();
    }
    return true;
  };
  Eigen::VectorXd r0(2 * n), rp(2 * n), rm(2 * n);
  if (!reproject_cost(cam_from_world, r0))
    throw DegenerateConfiguration("points behind the camera");
  double cost = r0.squaredNorm();

  for (int it = 0; it < 20; ++it) {
    Eigen::MatrixXd jac(2 * n, 6);
    const double step = 1e-7;
    bool ok = true;
    for (int p = 0; p < 6 && ok; ++p) {
      Vec3 dw = Vec3::Zero(), dt = Vec3::Zero();
      if (p < 3)
        dw[p] = step;
      else
        dt[p - 3] = step;
      const Pose pp{cam_from_world.rotation * Rotation::from_axis_angle(dw),
                    cam_from_world.translation + dt};
      const Pose pm{cam_from_world.rotation * Rotation::from_axis_angle(-dw),
                    cam_from_world.translation - dt};
      ok = reproject_cost(pp, rp) && reproject_cost(pm, rm);
      if (ok) jac.col(p) = (rp - rm) / (2 * step);
    }
    if (!ok) break;
    const Eigen::Matrix<double, 6, 6> jtj = jac.transpose() * jac;
    const Eigen::Matrix<double, 6, 1> g = jac.transpose() * r0;
    Eigen::Matrix<double, 6, 1> delta =
        (jtj + 1e-12 * Eigen::Matrix<double, 6, 6>::Identity()).ldlt().solve(g);

    bool improved = false;
    for (int half = 0; half < 8 && !improved; ++half) {
      const Pose trial{
          cam_from_world.rotation *
              Rotation::from_axis_angle(Vec3(-delta(0), -delta(1), -delta(2))),
          cam_from_world.translation + Vec3(-delta(3), -delta(4), -delta(5))};
      if (!reproject_cost(trial, rp)) {
        delta *= 0.5;
        continue;
      }
      const double trial_cost = rp.squaredNorm();
      if (trial_cost < cost) {
        cam_from_world = trial;
        cost = trial_cost;
        r0 = rp;
        improved = true;
      } else {
        delta *= 0.5;
      }
    }
    if (!improved || cost < 1e-24) break;
  }
  return cam_from_world;
}

}  // namespace sitl
