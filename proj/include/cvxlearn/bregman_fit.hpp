#ifndef CVXLEARN_BREGMAN_FIT_HPP
#define CVXLEARN_BREGMAN_FIT_HPP

#include <Eigen/Dense>
#include <chrono>
#include <set>

#include "cvxlearn/convex_fit.hpp"

namespace cvxlearn {

template <class Scalar>
struct BregmanAdmmState {
  Vec<Scalar> z;                   // n
  Mat<Scalar> a;                   // n x d
  Mat<Scalar> zeta;                // n x n
  Vec<Scalar> L;                   // d
  Mat<Scalar> p_plus, p_minus, u;  // n x d
  Mat<Scalar> s, t_slack;          // n x n
  Mat<Scalar> alpha;               // n x n
  Mat<Scalar> gamma, eta;          // n x d
  Mat<Scalar> tau;                 // n x n
  Mat<Scalar> iota;                // n x n in {-1, +1}
  int t = 0;

  Mat<Scalar> theta;  // first-block workspace
  Mat<Scalar> W;

  static BregmanAdmmState zeros(Eigen::Index n, Eigen::Index d,
                                const std::vector<int>& labels) {
    BregmanAdmmState st;
    st.z = Vec<Scalar>::Zero(n);
    st.a = Mat<Scalar>::Zero(n, d);
    st.zeta = Mat<Scalar>::Zero(n, n);
    st.L = Vec<Scalar>::Zero(d);
    st.p_plus = Mat<Scalar>::Zero(n, d);
    st.p_minus = Mat<Scalar>::Zero(n, d);
    st.u = Mat<Scalar>::Zero(n, d);
    st.s = Mat<Scalar>::Zero(n, n);
    st.t_slack = Mat<Scalar>::Zero(n, n);
    st.alpha = Mat<Scalar>::Zero(n, n);
    st.gamma = Mat<Scalar>::Zero(n, d);
    st.eta = Mat<Scalar>::Zero(n, d);
    st.tau = Mat<Scalar>::Zero(n, n);
    st.iota.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        st.iota(i, j) = labels[static_cast<size_t>(i)] == labels[static_cast<size_t>(j)]
                            ? Scalar(1)
                            : Scalar(-1);
    return st;
  }

  bool finite_and_bounded(Scalar bound = Scalar(1e12)) const {
    auto ok = [&](const auto& M) { return M.allFinite() && M.cwiseAbs().maxCoeff() <= bound; };
    return ok(z) && ok(a) && ok(zeta) && ok(L) && ok(p_plus) && ok(p_minus) && ok(u) && ok(s) &&
           ok(t_slack) && ok(alpha) && ok(gamma) && ok(eta) && ok(tau);
  }
};

// zeta_{ij} = (-1/(n rho) + tau + iota s - iota + t + 1)^+ element-wise.
template <class Scalar>
void update_zeta(BregmanAdmmState<Scalar>& st, Scalar rho) {
  const Scalar n = Scalar(st.z.size());
  st.zeta = ((st.tau + st.iota.cwiseProduct(st.s) - st.iota + st.t_slack).array() + Scalar(1) -
             Scalar(1) / (n * rho))
                .cwiseMax(Scalar(0))
                .matrix();
}

// z = Omega_breg^{-1}(nu - beta), where nu reuses the v-formula on the
// Bregman-state theta and Omega_breg = diag(2 - x_i^T Lambda_i x_i) - D/n.
// Fills the theta/W workspace for update_a_bregman.
template <class Scalar>
void update_z(BregmanAdmmState<Scalar>& st, const ConvexPrecompute<Scalar>& pre,
              const Mat<Scalar>& X) {
  const Eigen::Index n = X.rows();
  st.theta = compute_theta(X, st.p_plus, st.p_minus, st.eta, st.alpha, st.s);
  st.W.resize(n, X.cols());
  for (Eigen::Index i = 0; i < n; ++i)
    st.W.row(i) =
        (pre.lambdas[static_cast<size_t>(i)] * st.theta.row(i).transpose()).transpose();
  Vec<Scalar> nu = compute_v(X, st.W);
  Vec<Scalar> beta = compute_beta(st.alpha, st.s);
  st.z = pre.omega.solve(nu - beta);
}

// a_i = Lambda_i (theta_i + z_i x_i + (1/n) sum_k z_k x_k); identical to the
// convex slope update with z in place of yhat.
template <class Scalar>
void update_a_bregman(BregmanAdmmState<Scalar>& st, const ConvexPrecompute<Scalar>& pre,
                      const Mat<Scalar>& X) {
  Vec<Scalar> g = X.transpose() * st.z / Scalar(X.rows());
  st.a = st.W + st.z.asDiagonal() * pre.LX;
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    st.a.row(i) += (pre.lambdas[static_cast<size_t>(i)] * g).transpose();
}

// Joint (s, t) solve:
//   pi1 = -tau + iota - 1 + zeta,  pi2 = -alpha - z_i + z_j + <a_i, x_i - x_j>
//   s = (1/2)(pi2 + iota pi1 - iota (pi1 - iota pi2)^+)^+,  t = (pi1 - iota s)^+.
template <class Scalar>
void update_s_t(BregmanAdmmState<Scalar>& st, const Mat<Scalar>& X) {
  const Eigen::Index n = X.rows();
  Mat<Scalar> pi1 = (-st.tau + st.iota + st.zeta).array() - Scalar(1);
  Mat<Scalar> ip = pairwise_slope_terms(X, st.a);
  Mat<Scalar> pi2 =
      -st.alpha - (st.z.replicate(1, n).rowwise() - st.z.transpose()) + ip;
  Mat<Scalar> inner = (pi1 - st.iota.cwiseProduct(pi2)).cwiseMax(Scalar(0));
  st.s = (Scalar(0.5) *
          (pi2 + st.iota.cwiseProduct(pi1) - st.iota.cwiseProduct(inner)))
             .cwiseMax(Scalar(0));
  st.t_slack = (pi1 - st.iota.cwiseProduct(st.s)).cwiseMax(Scalar(0));
}

// L first, then the (u, p+, p-) triple off the fresh L (same shapes as the
// convex second block, minus the s part which lives in update_s_t here).
template <class Scalar>
void update_u_p(BregmanAdmmState<Scalar>& st, Scalar lambda, Scalar rho) {
  const Eigen::Index d = st.a.cols();
  Mat<Scalar> c = (st.eta + st.a).cwiseAbs();
  for (Eigen::Index l = 0; l < d; ++l)
    st.L(l) = l_update<Scalar>(st.gamma.col(l), c.col(l), lambda / rho);
  Mat<Scalar> slack = (-st.gamma).rowwise() + st.L.transpose();
  st.u = (slack - c).cwiseMax(Scalar(0));
  st.p_plus = Scalar(0.5) * (slack - st.u + st.eta + st.a).cwiseMax(Scalar(0));
  st.p_minus = Scalar(0.5) * (slack - st.u - st.eta - st.a).cwiseMax(Scalar(0));
}

template <class Scalar>
void update_duals_bregman(BregmanAdmmState<Scalar>& st, const Mat<Scalar>& X) {
  const Eigen::Index n = X.rows();
  Mat<Scalar> ip = pairwise_slope_terms(X, st.a);
  Mat<Scalar> E = (st.z.replicate(1, n).rowwise() - st.z.transpose()) - ip;
  st.alpha += st.s + E;
  st.gamma += ((st.u + st.p_plus + st.p_minus).rowwise() - st.L.transpose());
  st.eta += st.a - st.p_plus + st.p_minus;
  st.tau +=
      ((st.iota.cwiseProduct(st.s) - st.iota + st.t_slack - st.zeta).array() + Scalar(1))
          .matrix();
}

// Tracked training objective: (1/n) sum_{ij} zeta_{ij} + lambda sum_l L_l.
template <class Scalar>
Scalar bregman_objective(const BregmanAdmmState<Scalar>& st, Scalar lambda) {
  return st.zeta.sum() / Scalar(st.z.size()) + lambda * st.L.sum();
}

// Hinge objective evaluated directly from (z, a): same-label pairs pay the
// clamped divergence s^+, different-label pairs pay (2 - s^+)^+, plus the
// slope penalty.  Used for reporting and oracle comparison.
template <class Scalar>
Scalar bregman_reduced_objective(const Mat<Scalar>& X, const std::vector<int>& labels,
                                 const Vec<Scalar>& z, const Mat<Scalar>& a, Scalar lambda) {
  const Eigen::Index n = X.rows();
  Mat<Scalar> ip = pairwise_slope_terms(X, a);
  Mat<Scalar> s =
      (ip - (z.replicate(1, n).rowwise() - z.transpose())).cwiseMax(Scalar(0));
  Scalar loss = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (labels[static_cast<size_t>(i)] == labels[static_cast<size_t>(j)])
        loss += s(i, j);
      else
        loss += std::max(Scalar(2) - s(i, j), Scalar(0));
    }
  return loss / Scalar(n) + lambda * a.cwiseAbs().colwise().maxCoeff().sum();
}

template <class Scalar>
struct BregmanFitResult {
  BregmanModel<Scalar> model;
  FitReport report;
  Vec<Scalar> z;
  Mat<Scalar> a;
  Mat<Scalar> X_normalized;
  bool single_class_warning = false;
};

template <class Scalar>
BregmanFitResult<Scalar> fit_bregman(const Dataset<Scalar>& raw, const FitConfig<Scalar>& cfg) {
  if (!raw.classification)
    throw std::invalid_argument("fit_bregman: dataset must carry labels");
  if (raw.n() < 2) throw std::invalid_argument("fit_bregman: need n >= 2");
  auto [data, norm] = normalize(raw);
  const Eigen::Index n = data.n(), d = data.d();
  const Scalar rho = cfg.resolve_rho(n, d);
  auto pre = ConvexPrecompute<Scalar>::make(data.X, rho, OmegaVariant::bregman);
  auto st = BregmanAdmmState<Scalar>::zeros(n, d, data.labels);

  BregmanFitResult<Scalar> out;
  out.single_class_warning =
      std::set<int>(data.labels.begin(), data.labels.end()).size() < 2;

  FitReport report;
  detail::EarlyStopper<Scalar> stopper{cfg.resolve_patience(n), cfg.min_improvement, {}};
  report.stop_reason = "max_iters";
  for (int t = 0; t < cfg.max_iters; ++t) {
    auto t0 = std::chrono::steady_clock::now();
    update_zeta(st, rho);
    update_z(st, pre, data.X);
    update_a_bregman(st, pre, data.X);
    update_u_p(st, cfg.lambda, rho);  // L first, Algorithm order keeps (s,t) after L
    update_s_t(st, data.X);
    Mat<Scalar> ip = pairwise_slope_terms(data.X, st.a);
    Mat<Scalar> E = (st.z.replicate(1, n).rowwise() - st.z.transpose()) - ip;
    update_duals_bregman(st, data.X);
    st.t = t + 1;
    if (!st.finite_and_bounded()) throw DivergenceError(t, static_cast<double>(rho));
    double rc = (st.s + E).cwiseAbs().maxCoeff();
    double rl =
        ((st.u + st.p_plus + st.p_minus).rowwise() - st.L.transpose()).cwiseAbs().maxCoeff();
    double ra = (st.a - st.p_plus + st.p_minus).cwiseAbs().maxCoeff();
    Scalar obj = bregman_objective(st, cfg.lambda);
    double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
    report.rows.push_back({t, static_cast<double>(obj), rc, rl, ra, ms});
    if (cfg.early_stop && stopper.push(obj)) {
      report.stop_reason = "early_stop";
      break;
    }
  }
  report.iters_run = st.t;

  out.z = st.z;
  out.a = st.a;
  out.model.generator.anchors = data.X;
  out.model.generator.slopes = st.a;
  out.model.generator.offsets = st.z;
  out.model.generator.norm = norm;
  out.model.train_labels = data.labels;
  out.report = std::move(report);
  out.X_normalized = data.X;
  return out;
}

}  // namespace cvxlearn

#endif  // CVXLEARN_BREGMAN_FIT_HPP
