#ifndef CVXLEARN_CONVEX_FIT_HPP
#define CVXLEARN_CONVEX_FIT_HPP

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cvxlearn/dataset.hpp"
#include "cvxlearn/model.hpp"
#include "cvxlearn/numerics.hpp"

namespace cvxlearn {

struct DivergenceError : std::runtime_error {
  int iteration;
  double rho;
  DivergenceError(int it, double r)
      : std::runtime_error("solver diverged at iteration " + std::to_string(it) +
                           " (rho=" + std::to_string(r) + "): state exceeded 1e12"),
        iteration(it),
        rho(r) {}
};

template <class Scalar>
struct FitConfig {
  Scalar lambda = Scalar(0.1);
  Scalar rho = Scalar(-1);  // <= 0 resolves to the default sqrt(d) lambda^2 / n
  int max_iters = 2000;
  bool early_stop = false;
  int patience = -1;  // < 0 resolves to n
  Scalar min_improvement = Scalar(1e-3);
  bool averaged_output = false;
  bool monotone = false;  // project p_minus to zero each iteration

  Scalar resolve_rho(Eigen::Index n, Eigen::Index d) const {
    if (rho > Scalar(0)) return rho;
    return std::sqrt(Scalar(d)) * lambda * lambda / Scalar(n);
  }
  int resolve_patience(Eigen::Index n) const {
    return patience > 0 ? patience : static_cast<int>(n);
  }
};

struct FitReportRow {
  int iter;
  double objective;
  double res_convexity;  // max |s + yhat_i - yhat_j - <a_i, x_i - x_j>|
  double res_L;          // max |u + p_plus + p_minus - L|
  double res_ap;         // max |a - p_plus + p_minus|
  double millis;         // wall time of this iteration
};

struct FitReport {
  std::vector<FitReportRow> rows;
  std::string stop_reason;
  int iters_run = 0;
};

// Shared per-fit precomputation: Lambda_i, their products with the anchors,
// D, and the factored system matrix for the y-solve.
template <class Scalar>
struct ConvexPrecompute {
  std::vector<Mat<Scalar>> lambdas;  // n of d x d
  Mat<Scalar> LX;                    // n x d, row i = (Lambda_i x_i)^T
  Mat<Scalar> D;                     // n x n
  OmegaFactor<Scalar> omega;
  Scalar rho = 0;

  static ConvexPrecompute make(const Mat<Scalar>& X, Scalar rho, OmegaVariant variant) {
    ConvexPrecompute p;
    p.rho = rho;
    p.lambdas = precompute_lambdas(X);
    const Eigen::Index n = X.rows(), d = X.cols();
    p.LX.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
      p.LX.row(i) = (p.lambdas[static_cast<size_t>(i)] * X.row(i).transpose()).transpose();
    p.D = compute_D(X, p.lambdas);
    p.omega = build_omega(X, p.lambdas, p.D, rho, variant);
    return p;
  }
};

template <class Scalar>
struct ConvexAdmmState {
  Vec<Scalar> y_hat;                    // n
  Mat<Scalar> a;                        // n x d
  Vec<Scalar> L;                        // d
  Mat<Scalar> p_plus, p_minus, u;       // n x d
  Mat<Scalar> s;                        // n x n
  Mat<Scalar> alpha;                    // n x n
  Mat<Scalar> gamma, eta;               // n x d
  Vec<Scalar> y_sum;                    // running sums for averaged iterates
  Mat<Scalar> a_sum;
  int t = 0;

  // First-block workspace, valid between update_y and update_a of one sweep.
  Mat<Scalar> theta;  // n x d
  Mat<Scalar> W;      // n x d, row i = (Lambda_i theta_i)^T

  static ConvexAdmmState zeros(Eigen::Index n, Eigen::Index d) {
    ConvexAdmmState st;
    st.y_hat = Vec<Scalar>::Zero(n);
    st.a = Mat<Scalar>::Zero(n, d);
    st.L = Vec<Scalar>::Zero(d);
    st.p_plus = Mat<Scalar>::Zero(n, d);
    st.p_minus = Mat<Scalar>::Zero(n, d);
    st.u = Mat<Scalar>::Zero(n, d);
    st.s = Mat<Scalar>::Zero(n, n);
    st.alpha = Mat<Scalar>::Zero(n, n);
    st.gamma = Mat<Scalar>::Zero(n, d);
    st.eta = Mat<Scalar>::Zero(n, d);
    st.y_sum = Vec<Scalar>::Zero(n);
    st.a_sum = Mat<Scalar>::Zero(n, d);
    return st;
  }

  bool finite_and_bounded(Scalar bound = Scalar(1e12)) const {
    auto ok = [&](const auto& M) { return M.allFinite() && M.cwiseAbs().maxCoeff() <= bound; };
    return ok(y_hat) && ok(a) && ok(L) && ok(p_plus) && ok(p_minus) && ok(u) && ok(s) &&
           ok(alpha) && ok(gamma) && ok(eta);
  }
};

// theta_i = (1/n)(p_i+ - p_i- - eta_i + sum_j (alpha_{ij} + s_{ij})(x_i - x_j)).
template <class Scalar>
Mat<Scalar> compute_theta(const Mat<Scalar>& X, const Mat<Scalar>& p_plus,
                          const Mat<Scalar>& p_minus, const Mat<Scalar>& eta,
                          const Mat<Scalar>& alpha, const Mat<Scalar>& s) {
  const Eigen::Index n = X.rows();
  Mat<Scalar> AS = alpha + s;
  Vec<Scalar> row_sums = AS.rowwise().sum();
  Mat<Scalar> theta = p_plus - p_minus - eta + row_sums.asDiagonal() * X - AS * X;
  return theta / Scalar(n);
}

// v_i = x_i^T Lambda_i theta_i + (1/n) x_i^T sum_j Lambda_j theta_j
//       - (1/n) sum_j x_j^T Lambda_j theta_j, with W_i = Lambda_i theta_i.
template <class Scalar>
Vec<Scalar> compute_v(const Mat<Scalar>& X, const Mat<Scalar>& W) {
  const Eigen::Index n = X.rows();
  Vec<Scalar> own = (X.array() * W.array()).rowwise().sum();
  Vec<Scalar> wsum = W.colwise().sum().transpose();
  return own + (X * wsum) / Scalar(n) - Vec<Scalar>::Constant(n, own.sum() / Scalar(n));
}

// beta_i = (1/n) sum_j (alpha_{ij} - alpha_{ji} + s_{ij} - s_{ji}).
template <class Scalar>
Vec<Scalar> compute_beta(const Mat<Scalar>& alpha, const Mat<Scalar>& s) {
  Mat<Scalar> AS = alpha + s;
  return (AS.rowwise().sum() - AS.colwise().sum().transpose()) / Scalar(AS.rows());
}

// First half of the first block: yhat = Omega^{-1}(2y/(n^2 rho) + v - beta).
// Fills the theta/W workspace that update_a consumes.
template <class Scalar>
void update_y(ConvexAdmmState<Scalar>& st, const ConvexPrecompute<Scalar>& pre,
              const Mat<Scalar>& X, const Vec<Scalar>& y) {
  const Eigen::Index n = X.rows();
  st.theta = compute_theta(X, st.p_plus, st.p_minus, st.eta, st.alpha, st.s);
  st.W.resize(n, X.cols());
  for (Eigen::Index i = 0; i < n; ++i)
    st.W.row(i) =
        (pre.lambdas[static_cast<size_t>(i)] * st.theta.row(i).transpose()).transpose();
  Vec<Scalar> v = compute_v(X, st.W);
  Vec<Scalar> beta = compute_beta(st.alpha, st.s);
  Vec<Scalar> rhs = Scalar(2) * y / (Scalar(n) * Scalar(n) * pre.rho) + v - beta;
  st.y_hat = pre.omega.solve(rhs);
}

// Second half: a_i = Lambda_i (theta_i + yhat_i x_i + (1/n) sum_k yhat_k x_k).
template <class Scalar>
void update_a(ConvexAdmmState<Scalar>& st, const ConvexPrecompute<Scalar>& pre,
              const Mat<Scalar>& X) {
  const Eigen::Index n = X.rows();
  Vec<Scalar> g = X.transpose() * st.y_hat / Scalar(n);
  st.a = st.W + st.y_hat.asDiagonal() * pre.LX;
  for (Eigen::Index i = 0; i < n; ++i)
    st.a.row(i) += (pre.lambdas[static_cast<size_t>(i)] * g).transpose();
}

// <a_i, x_i - x_j> as an n x n matrix.
template <class Scalar>
Mat<Scalar> pairwise_slope_terms(const Mat<Scalar>& X, const Mat<Scalar>& a) {
  Vec<Scalar> own = (a.array() * X.array()).rowwise().sum();
  Mat<Scalar> ip = (-(a * X.transpose())).colwise() + own;
  return ip;
}

// Second block: L first (root-finder per column), then u, p+, p-, s off the
// fresh L.  All outputs are non-negative by construction.
template <class Scalar>
void update_second_block(ConvexAdmmState<Scalar>& st, const Mat<Scalar>& X, Scalar lambda,
                         Scalar rho, bool monotone = false) {
  const Eigen::Index d = X.cols();
  Mat<Scalar> c = (st.eta + st.a).cwiseAbs();
  for (Eigen::Index l = 0; l < d; ++l)
    st.L(l) = l_update<Scalar>(st.gamma.col(l), c.col(l), lambda / rho);
  Mat<Scalar> slack = (-st.gamma).rowwise() + st.L.transpose();
  st.u = (slack - c).cwiseMax(Scalar(0));
  st.p_plus = Scalar(0.5) * (slack - st.u + st.eta + st.a).cwiseMax(Scalar(0));
  st.p_minus = Scalar(0.5) * (slack - st.u - st.eta - st.a).cwiseMax(Scalar(0));
  if (monotone) st.p_minus.setZero();
  Mat<Scalar> ip = pairwise_slope_terms(X, st.a);
  Mat<Scalar> E = (st.y_hat.replicate(1, X.rows()).rowwise() - st.y_hat.transpose()) - ip;
  st.s = (-st.alpha - E).cwiseMax(Scalar(0));
}

// Scaled dual ascent on the three constraint families.
template <class Scalar>
void update_duals(ConvexAdmmState<Scalar>& st, const Mat<Scalar>& X) {
  Mat<Scalar> ip = pairwise_slope_terms(X, st.a);
  Mat<Scalar> E = (st.y_hat.replicate(1, X.rows()).rowwise() - st.y_hat.transpose()) - ip;
  st.alpha += st.s + E;
  st.gamma += ((st.u + st.p_plus + st.p_minus).rowwise() - st.L.transpose());
  st.eta += st.a - st.p_plus + st.p_minus;
}

// Regularized objective of the current iterate on normalized data:
// (1/n) sum (yhat_i - y_i)^2 + lambda sum_l max_i |a_{il}|.
template <class Scalar>
Scalar objective(const Vec<Scalar>& y, const Vec<Scalar>& y_hat, const Mat<Scalar>& a,
                 Scalar lambda) {
  Scalar mse = (y_hat - y).squaredNorm() / Scalar(y.size());
  Scalar pen = a.cwiseAbs().colwise().maxCoeff().sum();
  return mse + lambda * pen;
}

template <class Scalar>
struct ConvexFitResult {
  MaxAffineModel<Scalar> model;
  FitReport report;
  // Final (or averaged) iterate in normalized coordinates, for diagnostics.
  Vec<Scalar> y_hat;
  Mat<Scalar> a;
  Vec<Scalar> y_normalized;
  Mat<Scalar> X_normalized;
};

namespace detail {

// Early-stop bookkeeping: stop when the best objective has improved by less
// than min_improvement over the trailing `patience` iterations.
template <class Scalar>
struct EarlyStopper {
  int patience;
  Scalar min_improvement;
  std::vector<Scalar> best_so_far;

  bool push(Scalar value) {
    Scalar best = best_so_far.empty() ? value : std::min(best_so_far.back(), value);
    best_so_far.push_back(best);
    int t = static_cast<int>(best_so_far.size()) - 1;
    if (t < patience) return false;
    return best_so_far[static_cast<size_t>(t - patience)] - best < min_improvement;
  }
};

}  // namespace detail

template <class Scalar>
ConvexFitResult<Scalar> fit_convex(const Dataset<Scalar>& raw, const FitConfig<Scalar>& cfg) {
  auto [data, norm] = normalize(raw);
  const Eigen::Index n = data.n(), d = data.d();
  const Scalar rho = cfg.resolve_rho(n, d);
  auto pre = ConvexPrecompute<Scalar>::make(data.X, rho, OmegaVariant::convex);
  auto st = ConvexAdmmState<Scalar>::zeros(n, d);

  FitReport report;
  detail::EarlyStopper<Scalar> stopper{cfg.resolve_patience(n), cfg.min_improvement, {}};
  report.stop_reason = "max_iters";
  for (int t = 0; t < cfg.max_iters; ++t) {
    auto t0 = std::chrono::steady_clock::now();
    update_y(st, pre, data.X, data.y);
    update_a(st, pre, data.X);
    update_second_block(st, data.X, cfg.lambda, rho, cfg.monotone);
    update_duals(st, data.X);
    st.y_sum += st.y_hat;
    st.a_sum += st.a;
    st.t = t + 1;
    if (!st.finite_and_bounded()) throw DivergenceError(t, static_cast<double>(rho));

    Mat<Scalar> ip = pairwise_slope_terms(data.X, st.a);
    Mat<Scalar> E = (st.y_hat.replicate(1, n).rowwise() - st.y_hat.transpose()) - ip;
    double rc = (st.s + E).cwiseAbs().maxCoeff();
    double rl =
        ((st.u + st.p_plus + st.p_minus).rowwise() - st.L.transpose()).cwiseAbs().maxCoeff();
    double ra = (st.a - st.p_plus + st.p_minus).cwiseAbs().maxCoeff();
    Scalar obj = objective(data.y, st.y_hat, st.a, cfg.lambda);
    double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
    report.rows.push_back({t, static_cast<double>(obj), rc, rl, ra, ms});
    if (cfg.early_stop && stopper.push(obj)) {
      report.stop_reason = "early_stop";
      break;
    }
  }
  report.iters_run = st.t;

  ConvexFitResult<Scalar> out;
  if (cfg.averaged_output && st.t > 0) {
    out.y_hat = st.y_sum / Scalar(st.t);
    out.a = st.a_sum / Scalar(st.t);
  } else {
    out.y_hat = st.y_hat;
    out.a = st.a;
  }
  out.model.anchors = data.X;
  out.model.slopes = out.a;
  out.model.offsets = out.y_hat;
  out.model.norm = norm;
  out.report = std::move(report);
  out.y_normalized = data.y;
  out.X_normalized = data.X;
  return out;
}

inline void write_fit_report_csv(const FitReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "iter,objective,res_convexity,res_L,res_ap,millis\n";
  char buf[256];
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.6g\n", row.iter,
                  row.objective, row.res_convexity, row.res_L, row.res_ap, row.millis);
    out << buf;
  }
}

}  // namespace cvxlearn

#endif  // CVXLEARN_CONVEX_FIT_HPP
