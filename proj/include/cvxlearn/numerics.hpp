#ifndef CVXLEARN_NUMERICS_HPP
#define CVXLEARN_NUMERICS_HPP

#include <Eigen/Dense>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "cvxlearn/dataset.hpp"

namespace cvxlearn {

// Per-point inverses Lambda_i = (x_i x_i^T + (1/n) I + (1/n) sum_j x_j x_j^T)^{-1}.
// The shared base B = (1/n) I + (1/n) X^T X is inverted once and each Lambda_i
// is obtained from a rank-1 Sherman-Morrison update, O(d^3 + n d^2) total.
// Define CVXLEARN_DIRECT_LAMBDAS to invert each matrix directly instead.
template <class Scalar>
std::vector<Mat<Scalar>> precompute_lambdas(const Mat<Scalar>& X) {
  const Eigen::Index n = X.rows(), d = X.cols();
  if (!X.allFinite()) throw std::invalid_argument("precompute_lambdas: non-finite X");
  std::vector<Mat<Scalar>> out(static_cast<size_t>(n));
  Mat<Scalar> B = (X.transpose() * X) / Scalar(n);
  B.diagonal().array() += Scalar(1) / Scalar(n);
#ifdef CVXLEARN_DIRECT_LAMBDAS
  for (Eigen::Index i = 0; i < n; ++i) {
    Mat<Scalar> M = B + X.row(i).transpose() * X.row(i);
    out[static_cast<size_t>(i)] = M.inverse();
  }
#else
  Mat<Scalar> Binv = B.inverse();
  for (Eigen::Index i = 0; i < n; ++i) {
    Vec<Scalar> bx = Binv * X.row(i).transpose();
    Scalar denom = Scalar(1) + X.row(i).dot(bx);
    Mat<Scalar> L = Binv - (bx * bx.transpose()) / denom;
    out[static_cast<size_t>(i)] = Scalar(0.5) * (L + L.transpose());  // enforce symmetry
  }
#endif
  return out;
}

// D_{i,j} = x_i^T (Lambda_i + Lambda_j + (1/n) sum_k Lambda_k) x_j
//           - x_j^T Lambda_j x_j - (1/n) sum_k x_k^T Lambda_k x_j.
// Not symmetric in general.
template <class Scalar>
Mat<Scalar> compute_D(const Mat<Scalar>& X, const std::vector<Mat<Scalar>>& lambdas) {
  const Eigen::Index n = X.rows(), d = X.cols();
  Mat<Scalar> lam_sum = Mat<Scalar>::Zero(d, d);
  Mat<Scalar> LX(n, d);   // row i = (Lambda_i x_i)^T
  Vec<Scalar> q(n);       // q_j = x_j^T Lambda_j x_j
  Vec<Scalar> r = Vec<Scalar>::Zero(d);  // sum_k Lambda_k x_k
  for (Eigen::Index i = 0; i < n; ++i) {
    const Mat<Scalar>& L = lambdas[static_cast<size_t>(i)];
    lam_sum += L;
    Vec<Scalar> Lx = L * X.row(i).transpose();
    LX.row(i) = Lx.transpose();
    q(i) = X.row(i).dot(Lx);
    r += Lx;
  }
  // x_i^T Lambda_i x_j  and  x_i^T Lambda_j x_j (= x_j^T Lambda_j x_i by symmetry)
  Mat<Scalar> A1 = LX * X.transpose();                 // (i,j): x_i^T Lambda_i x_j ... careful
  // LX.row(i) = x_i^T Lambda_i, so A1(i,j) = x_i^T Lambda_i x_j.
  Mat<Scalar> A2 = X * LX.transpose();                 // (i,j): x_i^T Lambda_j x_j
  Mat<Scalar> A3 = (X * lam_sum * X.transpose()) / Scalar(n);  // (i,j): x_i^T (mean Lam) x_j * n/n
  Vec<Scalar> cross = X * r / Scalar(n);               // (j): (1/n) sum_k x_k^T Lambda_k x_j
  Mat<Scalar> D = A1 + A2 + A3;
  D.rowwise() -= (q + cross).transpose();
  return D;
}

enum class OmegaVariant { convex, bregman, dc_plus, dc_minus };

inline const char* omega_variant_name(OmegaVariant v) {
  switch (v) {
    case OmegaVariant::convex: return "convex";
    case OmegaVariant::bregman: return "bregman";
    case OmegaVariant::dc_plus: return "dc_plus";
    case OmegaVariant::dc_minus: return "dc_minus";
  }
  return "?";
}

// Factored system matrix for the per-iteration linear solve.
// convex:   Omega_{ij} = (2/(n^2 rho) + 2 - x_i^T Lambda_i x_i) 1(i=j) - D_{ij}/n
// bregman:  diagonal (2 - x_i^T Lambda_i x_i) - D/n
// dc_plus / dc_minus: convex Omega +/- 2 I/(n^2 rho) ... relative to the
// bregman base, i.e. (bregman base) + 2/(n^2 rho) +/- 2/(n^2 rho) on the diagonal.
template <class Scalar>
struct OmegaFactor {
  Eigen::PartialPivLU<Mat<Scalar>> lu;
  OmegaVariant variant = OmegaVariant::convex;
  Scalar rcond_estimate = 1;

  Vec<Scalar> solve(const Vec<Scalar>& rhs) const { return lu.solve(rhs); }
};

template <class Scalar>
Mat<Scalar> omega_matrix(const Mat<Scalar>& X, const std::vector<Mat<Scalar>>& lambdas,
                         const Mat<Scalar>& D, Scalar rho, OmegaVariant variant) {
  const Eigen::Index n = X.rows();
  Mat<Scalar> Om = -D / Scalar(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Scalar xi_l_xi = X.row(i).dot(lambdas[static_cast<size_t>(i)] * X.row(i).transpose());
    Scalar diag = Scalar(2) - xi_l_xi;
    switch (variant) {
      case OmegaVariant::convex:
        diag += Scalar(2) / (Scalar(n) * Scalar(n) * rho);
        break;
      case OmegaVariant::bregman:
        break;
      case OmegaVariant::dc_plus:
        diag += Scalar(4) / (Scalar(n) * Scalar(n) * rho);
        break;
      case OmegaVariant::dc_minus:
        break;  // convex Omega minus 2/(n^2 rho): the two terms cancel
    }
    Om(i, i) += diag;
  }
  return Om;
}

template <class Scalar>
OmegaFactor<Scalar> build_omega(const Mat<Scalar>& X, const std::vector<Mat<Scalar>>& lambdas,
                                const Mat<Scalar>& D, Scalar rho, OmegaVariant variant) {
  if ((variant == OmegaVariant::convex || variant == OmegaVariant::dc_plus ||
       variant == OmegaVariant::dc_minus) &&
      !(rho > Scalar(0)))
    throw std::invalid_argument("build_omega: rho must be > 0 for variant " +
                                std::string(omega_variant_name(variant)));
  Mat<Scalar> Om = omega_matrix(X, lambdas, D, rho, variant);
  OmegaFactor<Scalar> f;
  f.variant = variant;
  f.lu.compute(Om);
  // Cheap singularity screen: compare the smallest |U| pivot to the largest.
  Vec<Scalar> piv = f.lu.matrixLU().diagonal().cwiseAbs();
  Scalar pmax = piv.maxCoeff(), pmin = piv.minCoeff();
  f.rcond_estimate = pmax > Scalar(0) ? pmin / pmax : Scalar(0);
  if (!(f.rcond_estimate > Scalar(1e-14)))
    throw std::runtime_error("build_omega: numerically singular system matrix (variant " +
                             std::string(omega_variant_name(variant)) + ")");
  return f;
}

// Root of lambda_over_rho = sum_i psi(L; gamma_i, c_i), clamped at zero, where
//   psi = 0                     if L - gamma_i >= c_i
//   psi = (gamma_i + c_i - L)/2 if |L - gamma_i| <= c_i
//   psi = gamma_i - L           if L - gamma_i <= -c_i.
// The RHS is piecewise linear and non-increasing in L; walking the 2n knots
// gamma_i +/- c_i in descending order finds the crossing in O(n log n).
template <class Scalar>
Scalar l_update(const Vec<Scalar>& gammas, const Vec<Scalar>& cs, Scalar lambda_over_rho) {
  const Eigen::Index n = gammas.size();
  std::vector<Scalar> knots(static_cast<size_t>(2 * n));
  for (Eigen::Index i = 0; i < n; ++i) {
    knots[static_cast<size_t>(2 * i)] = gammas(i) + cs(i);
    knots[static_cast<size_t>(2 * i + 1)] = gammas(i) - cs(i);
  }
  std::sort(knots.begin(), knots.end(), std::greater<Scalar>());
  Scalar f = lambda_over_rho;   // lambda/rho - RHS(L), starts at the largest knot where RHS = 0
  Scalar fp = 0;                // d/dL of (lambda/rho - RHS): RHS slope is -fp
  for (size_t j = 1; j < knots.size(); ++j) {
    fp += Scalar(0.5);
    Scalar fnew = f + fp * (knots[j] - knots[j - 1]);  // knots descend, so this decreases f
    if (fnew <= Scalar(0)) {
      // Linear interpolation: f + fp*(L - knots[j-1]) = 0.
      Scalar L = knots[j - 1] - f / fp;
      return std::max(L, Scalar(0));
    }
    f = fnew;
  }
  // Below the lowest knot the RHS has slope -n: lambda/rho - RHS hits zero at
  // knots.back() - f/n (note RHS keeps growing as L decreases).
  Scalar L = knots.back() - f / Scalar(n);
  return std::max(L, Scalar(0));
}

// Independent bisection solver for the same equation; used as a test oracle.
template <class Scalar>
Scalar l_update_bisection(const Vec<Scalar>& gammas, const Vec<Scalar>& cs,
                          Scalar lambda_over_rho, int halvings = 200) {
  const Eigen::Index n = gammas.size();
  auto rhs = [&](Scalar L) {
    Scalar acc = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Scalar diff = L - gammas(i);
      if (diff >= cs(i))
        continue;
      else if (diff <= -cs(i))
        acc += gammas(i) - L;
      else
        acc += (gammas(i) + cs(i) - L) / Scalar(2);
    }
    return acc;
  };
  Scalar hi = (gammas + cs).maxCoeff();
  if (hi <= Scalar(0)) return Scalar(0);
  if (rhs(Scalar(0)) <= lambda_over_rho) return Scalar(0);  // clamp boundary
  Scalar lo = Scalar(0);
  for (int it = 0; it < halvings; ++it) {
    Scalar mid = (lo + hi) / Scalar(2);
    if (rhs(mid) > lambda_over_rho)
      lo = mid;
    else
      hi = mid;
  }
  return (lo + hi) / Scalar(2);
}

}  // namespace cvxlearn

#endif  // CVXLEARN_NUMERICS_HPP
