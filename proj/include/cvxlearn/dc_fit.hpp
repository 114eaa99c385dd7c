#ifndef CVXLEARN_DC_FIT_HPP
#define CVXLEARN_DC_FIT_HPP

#include <Eigen/Dense>
#include <array>
#include <chrono>

#include "cvxlearn/convex_fit.hpp"

namespace cvxlearn {

// Two coupled copies of the convex machinery: copy 0 fits phi1, copy 1 fits
// phi2, and the responses are solved jointly so phi1 - phi2 tracks y.
template <class Scalar>
struct DcAdmmState {
  std::array<ConvexAdmmState<Scalar>, 2> copies;
  int t = 0;

  static DcAdmmState zeros(Eigen::Index n, Eigen::Index d) {
    DcAdmmState st;
    st.copies[0] = ConvexAdmmState<Scalar>::zeros(n, d);
    st.copies[1] = ConvexAdmmState<Scalar>::zeros(n, d);
    return st;
  }
};

template <class Scalar>
struct DcPrecompute {
  std::vector<Mat<Scalar>> lambdas;
  Mat<Scalar> LX;
  Mat<Scalar> D;
  OmegaFactor<Scalar> omega_plus;   // Omega + 2I/(n^2 rho)
  OmegaFactor<Scalar> omega_minus;  // Omega - 2I/(n^2 rho)
  Scalar rho = 0;

  // View with the solver slot a convex-module op expects; the y-pair solve
  // below never touches pre.omega, so the slot stays empty.
  ConvexPrecompute<Scalar> as_convex_view() const {
    ConvexPrecompute<Scalar> v;
    v.lambdas = lambdas;
    v.LX = LX;
    v.D = D;
    v.rho = rho;
    return v;
  }

  static DcPrecompute make(const Mat<Scalar>& X, Scalar rho) {
    DcPrecompute p;
    p.rho = rho;
    p.lambdas = precompute_lambdas(X);
    const Eigen::Index n = X.rows(), d = X.cols();
    p.LX.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
      p.LX.row(i) = (p.lambdas[static_cast<size_t>(i)] * X.row(i).transpose()).transpose();
    p.D = compute_D(X, p.lambdas);
    p.omega_plus = build_omega(X, p.lambdas, p.D, rho, OmegaVariant::dc_plus);
    p.omega_minus = build_omega(X, p.lambdas, p.D, rho, OmegaVariant::dc_minus);
    return p;
  }
};

// Joint response solve:
//   yhat^q = ((-1)^{q+1}/2) (Omega + 2I/(n^2 rho))^{-1} (4y/(n^2 rho) + v1 - b1 - v2 + b2)
//            + (1/2) (Omega - 2I/(n^2 rho))^{-1} (v1 - b1 + v2 - b2).
// Also fills each copy's theta/W workspace for the subsequent a-updates.
template <class Scalar>
void update_y_pair(DcAdmmState<Scalar>& st, const DcPrecompute<Scalar>& pre,
                   const Mat<Scalar>& X, const Vec<Scalar>& y) {
  const Eigen::Index n = X.rows();
  std::array<Vec<Scalar>, 2> vb;
  for (int q = 0; q < 2; ++q) {
    auto& c = st.copies[static_cast<size_t>(q)];
    c.theta = compute_theta(X, c.p_plus, c.p_minus, c.eta, c.alpha, c.s);
    c.W.resize(n, X.cols());
    for (Eigen::Index i = 0; i < n; ++i)
      c.W.row(i) =
          (pre.lambdas[static_cast<size_t>(i)] * c.theta.row(i).transpose()).transpose();
    vb[static_cast<size_t>(q)] =
        compute_v(X, c.W) - compute_beta(c.alpha, c.s);
  }
  Vec<Scalar> r_diff =
      Scalar(4) * y / (Scalar(n) * Scalar(n) * pre.rho) + vb[0] - vb[1];
  Vec<Scalar> r_sum = vb[0] + vb[1];
  Vec<Scalar> t1 = pre.omega_plus.solve(r_diff);
  Vec<Scalar> t2 = pre.omega_minus.solve(r_sum);
  st.copies[0].y_hat = Scalar(0.5) * t1 + Scalar(0.5) * t2;
  st.copies[1].y_hat = Scalar(-0.5) * t1 + Scalar(0.5) * t2;
}

// (1/n) sum (yhat1_i - yhat2_i - y_i)^2 + lambda sum_q sum_l max_i |a^q_{il}|.
template <class Scalar>
Scalar dc_objective(const Vec<Scalar>& y, const Vec<Scalar>& y1, const Mat<Scalar>& a1,
                    const Vec<Scalar>& y2, const Mat<Scalar>& a2, Scalar lambda) {
  Scalar mse = (y1 - y2 - y).squaredNorm() / Scalar(y.size());
  Scalar pen = a1.cwiseAbs().colwise().maxCoeff().sum() +
               a2.cwiseAbs().colwise().maxCoeff().sum();
  return mse + lambda * pen;
}

template <class Scalar>
struct DcFitResult {
  DcModel<Scalar> model;
  FitReport report;
  std::array<Vec<Scalar>, 2> y_hat;
  std::array<Mat<Scalar>, 2> a;
  Vec<Scalar> y_normalized;
  Mat<Scalar> X_normalized;
};

template <class Scalar>
DcFitResult<Scalar> fit_dc(const Dataset<Scalar>& raw, const FitConfig<Scalar>& cfg) {
  auto [data, norm] = normalize(raw);
  const Eigen::Index n = data.n(), d = data.d();
  const Scalar rho = cfg.resolve_rho(n, d);
  auto pre = DcPrecompute<Scalar>::make(data.X, rho);
  auto view = pre.as_convex_view();
  auto st = DcAdmmState<Scalar>::zeros(n, d);

  FitReport report;
  detail::EarlyStopper<Scalar> stopper{cfg.resolve_patience(n), cfg.min_improvement, {}};
  report.stop_reason = "max_iters";
  for (int t = 0; t < cfg.max_iters; ++t) {
    auto t0 = std::chrono::steady_clock::now();
    update_y_pair(st, pre, data.X, data.y);
    double rc = 0, rl = 0, ra = 0;
    for (auto& c : st.copies) {
      update_a(c, view, data.X);
      update_second_block(c, data.X, cfg.lambda, rho, cfg.monotone);
      Mat<Scalar> ip = pairwise_slope_terms(data.X, c.a);
      Mat<Scalar> E = (c.y_hat.replicate(1, n).rowwise() - c.y_hat.transpose()) - ip;
      update_duals(c, data.X);
      c.y_sum += c.y_hat;
      c.a_sum += c.a;
      rc = std::max(rc, static_cast<double>((c.s + E).cwiseAbs().maxCoeff()));
      rl = std::max(rl, static_cast<double>(((c.u + c.p_plus + c.p_minus).rowwise() -
                                             c.L.transpose())
                                                .cwiseAbs()
                                                .maxCoeff()));
      ra = std::max(ra,
                    static_cast<double>((c.a - c.p_plus + c.p_minus).cwiseAbs().maxCoeff()));
      if (!c.finite_and_bounded()) throw DivergenceError(t, static_cast<double>(rho));
    }
    st.t = t + 1;
    Scalar obj = dc_objective(data.y, st.copies[0].y_hat, st.copies[0].a, st.copies[1].y_hat,
                              st.copies[1].a, cfg.lambda);
    double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
    report.rows.push_back({t, static_cast<double>(obj), rc, rl, ra, ms});
    if (cfg.early_stop && stopper.push(obj)) {
      report.stop_reason = "early_stop";
      break;
    }
  }
  report.iters_run = st.t;

  DcFitResult<Scalar> out;
  for (int q = 0; q < 2; ++q) {
    auto& c = st.copies[static_cast<size_t>(q)];
    if (cfg.averaged_output && st.t > 0) {
      out.y_hat[static_cast<size_t>(q)] = c.y_sum / Scalar(st.t);
      out.a[static_cast<size_t>(q)] = c.a_sum / Scalar(st.t);
    } else {
      out.y_hat[static_cast<size_t>(q)] = c.y_hat;
      out.a[static_cast<size_t>(q)] = c.a;
    }
  }
  out.model.phi1.anchors = data.X;
  out.model.phi1.slopes = out.a[0];
  out.model.phi1.offsets = out.y_hat[0];
  out.model.phi1.norm = norm;
  out.model.phi2 = out.model.phi1;
  out.model.phi2.slopes = out.a[1];
  out.model.phi2.offsets = out.y_hat[1];
  out.report = std::move(report);
  out.y_normalized = data.y;
  out.X_normalized = data.X;
  return out;
}

}  // namespace cvxlearn

#endif  // CVXLEARN_DC_FIT_HPP
