#include <doctest.h>

#include <random>

#include "cvxlearn/dataset.hpp"
#include "cvxlearn/numerics.hpp"

using namespace cvxlearn;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Dataset<double> make_regression(const MatrixXd& X, const VectorXd& y) {
  Dataset<double> d;
  d.X = X;
  d.y = y;
  return d;
}

}  // namespace

TEST_CASE("normalize: symmetric two-point case") {
  MatrixXd X(2, 1);
  X << 1, 3;
  VectorXd y(2);
  y << 2, 4;
  auto [data, st] = normalize(make_regression(X, y));
  CHECK(data.X(0, 0) == doctest::Approx(-1.0));
  CHECK(data.X(1, 0) == doctest::Approx(1.0));
  CHECK(data.y(0) == doctest::Approx(-1.0));
  CHECK(data.y(1) == doctest::Approx(1.0));
  CHECK(st.x_center(0) == doctest::Approx(2.0));
  CHECK(st.x_scale(0) == doctest::Approx(1.0));
  CHECK(st.y_center == doctest::Approx(3.0));
  CHECK(st.y_scale == doctest::Approx(1.0));
}

TEST_CASE("normalize: degenerate constant data floors scales") {
  MatrixXd X(2, 1);
  X << 0, 0;
  VectorXd y(2);
  y << 5, 5;
  auto [data, st] = normalize(make_regression(X, y));
  CHECK(data.X.cwiseAbs().maxCoeff() == 0.0);
  CHECK(data.y.cwiseAbs().maxCoeff() == 0.0);
  CHECK(st.x_scale(0) > 0.0);
  CHECK(st.y_scale > 0.0);
  CHECK(st.warnings.size() == 2);
}

TEST_CASE("normalize: column bounds and unit response variance") {
  MatrixXd X(3, 2);
  X << 1, 10, 3, 30, 5, 50;
  VectorXd y(3);
  y << 0, 1, 2;
  auto [data, st] = normalize(make_regression(X, y));
  for (Eigen::Index l = 0; l < 2; ++l) {
    CHECK(std::abs(data.X.col(l).mean()) < 1e-12);
    CHECK(data.X.col(l).cwiseAbs().maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(std::abs(data.y.mean()) < 1e-12);
  CHECK(data.y.squaredNorm() / 3.0 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("normalize: round-trip recovers raw values") {
  std::mt19937 rng(11);
  std::normal_distribution<double> g;
  MatrixXd X(7, 3);
  VectorXd y(7);
  for (Eigen::Index i = 0; i < 7; ++i) {
    for (Eigen::Index l = 0; l < 3; ++l) X(i, l) = 3 * g(rng) + 5;
    y(i) = 2 * g(rng) - 1;
  }
  auto [data, st] = normalize(make_regression(X, y));
  for (Eigen::Index i = 0; i < 7; ++i) {
    VectorXd back = (data.X.row(i).transpose().array() * st.x_scale.array()).matrix() + st.x_center;
    CHECK((back - X.row(i).transpose()).cwiseAbs().maxCoeff() <
          1e-12 * (1 + X.row(i).cwiseAbs().maxCoeff()));
    CHECK(st.invert_y(data.y(i)) == doctest::Approx(y(i)).epsilon(1e-12));
  }
}

TEST_CASE("normalize: empty dataset is an error") {
  Dataset<double> d;
  d.X.resize(0, 1);
  d.y.resize(0);
  CHECK_THROWS(normalize(d));
}

TEST_CASE("precompute_lambdas: single zero point") {
  MatrixXd X(1, 1);
  X << 0;
  auto lam = precompute_lambdas(X);
  CHECK(lam[0](0, 0) == doctest::Approx(1.0));
}

TEST_CASE("precompute_lambdas: two symmetric 1-D points") {
  MatrixXd X(2, 1);
  X << -1, 1;
  auto lam = precompute_lambdas(X);
  CHECK(lam[0](0, 0) == doctest::Approx(0.4));  // (1 + 0.5 + 1)^{-1}
  CHECK(lam[1](0, 0) == doctest::Approx(0.4));
}

TEST_CASE("precompute_lambdas: multiply-back identity and symmetry") {
  std::mt19937 rng(3);
  std::normal_distribution<double> g;
  const Eigen::Index n = 5, d = 3;
  MatrixXd X(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index l = 0; l < d; ++l) X(i, l) = g(rng);
  auto lam = precompute_lambdas(X);
  MatrixXd base = MatrixXd::Identity(d, d) / double(n) + X.transpose() * X / double(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    MatrixXd M = base + X.row(i).transpose() * X.row(i);
    CHECK((lam[size_t(i)] * M - MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((lam[size_t(i)] - lam[size_t(i)].transpose()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

namespace {

// Literal scalar transcription of the D formula, element by element.
double d_entry(const MatrixXd& X, const std::vector<MatrixXd>& lam, Eigen::Index i,
               Eigen::Index j) {
  const Eigen::Index n = X.rows();
  MatrixXd mid = lam[size_t(i)] + lam[size_t(j)];
  for (Eigen::Index k = 0; k < n; ++k) mid += lam[size_t(k)] / double(n);
  double t1 = X.row(i) * mid * X.row(j).transpose();
  double t2 = X.row(j) * lam[size_t(j)] * X.row(j).transpose();
  double t3 = 0;
  for (Eigen::Index k = 0; k < n; ++k)
    t3 += double(X.row(k) * lam[size_t(k)] * X.row(j).transpose());
  return t1 - t2 - t3 / double(n);
}

}  // namespace

TEST_CASE("compute_D: all-zero predictors give zero") {
  MatrixXd X = MatrixXd::Zero(3, 2);
  auto lam = precompute_lambdas(X);
  CHECK(compute_D(X, lam).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("compute_D: matches scalar transcription") {
  MatrixXd X(2, 1);
  X << -1, 1;
  auto lam = precompute_lambdas(X);
  MatrixXd D = compute_D(X, lam);
  for (Eigen::Index i = 0; i < 2; ++i)
    for (Eigen::Index j = 0; j < 2; ++j)
      CHECK(D(i, j) == doctest::Approx(d_entry(X, lam, i, j)).epsilon(1e-12));
}

TEST_CASE("compute_D: random instance matches transcription") {
  std::mt19937 rng(5);
  std::normal_distribution<double> g;
  const Eigen::Index n = 6, d = 2;
  MatrixXd X(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index l = 0; l < d; ++l) X(i, l) = g(rng);
  auto lam = precompute_lambdas(X);
  MatrixXd D = compute_D(X, lam);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      CHECK(D(i, j) == doctest::Approx(d_entry(X, lam, i, j)).epsilon(1e-10));
}

TEST_CASE("build_omega: zero predictors, n=2, rho=1") {
  MatrixXd X = MatrixXd::Zero(2, 1);
  auto lam = precompute_lambdas(X);
  MatrixXd D = compute_D(X, lam);
  MatrixXd Om = omega_matrix(X, lam, D, 1.0, OmegaVariant::convex);
  CHECK((Om - 2.5 * MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-14);
  MatrixXd Ob = omega_matrix(X, lam, D, 1.0, OmegaVariant::bregman);
  CHECK((Ob - 2.0 * MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("build_omega: solve and multiply back") {
  std::mt19937 rng(7);
  std::normal_distribution<double> g;
  const Eigen::Index n = 8, d = 3;
  MatrixXd X(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index l = 0; l < d; ++l) X(i, l) = g(rng);
  auto lam = precompute_lambdas(X);
  MatrixXd D = compute_D(X, lam);
  for (auto variant : {OmegaVariant::convex, OmegaVariant::bregman, OmegaVariant::dc_plus,
                       OmegaVariant::dc_minus}) {
    auto f = build_omega(X, lam, D, 0.5, variant);
    MatrixXd Om = omega_matrix(X, lam, D, 0.5, variant);
    VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) r(i) = g(rng);
    VectorXd z = f.solve(r);
    CHECK((Om * z - r).norm() <= 1e-10 * r.norm());
  }
}

TEST_CASE("build_omega: rho <= 0 rejected for rho-dependent variants") {
  MatrixXd X = MatrixXd::Zero(2, 1);
  auto lam = precompute_lambdas(X);
  MatrixXd D = compute_D(X, lam);
  CHECK_THROWS(build_omega(X, lam, D, 0.0, OmegaVariant::convex));
  CHECK_NOTHROW(build_omega(X, lam, D, 0.0, OmegaVariant::bregman));
}

TEST_CASE("l_update: clamp and boundary cases") {
  VectorXd gam = VectorXd::Zero(3), cs = VectorXd::Zero(3);
  CHECK(l_update<double>(gam, cs, 1.0) == 0.0);

  VectorXd g2(2), c2(2);
  g2 << 1, 2;
  c2 << 0.5, 0.5;
  CHECK(l_update<double>(g2, c2, 0.0) == doctest::Approx(2.5));
  double L = l_update<double>(g2, c2, 0.5);
  CHECK(L == doctest::Approx(l_update_bisection<double>(g2, c2, 0.5)).epsilon(1e-10));
  CHECK(L == doctest::Approx(1.5));
}

TEST_CASE("l_update: agrees with bisection on 1000 random instances") {
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_int_distribution<int> usize(1, 64);
  std::uniform_real_distribution<double> ulam(0.0, 3.0);
  for (int rep = 0; rep < 1000; ++rep) {
    int n = usize(rng);
    VectorXd gam(n), cs(n);
    for (int i = 0; i < n; ++i) {
      gam(i) = u(rng);
      cs(i) = std::abs(u(rng));
      if (rep % 5 == 0) cs(i) = 0;              // c = 0 ties
      if (rep % 7 == 0 && i > 0) gam(i) = gam(0);  // duplicate knots
    }
    double lr = rep % 11 == 0 ? 0.0 : ulam(rng);
    double fast = l_update<double>(gam, cs, lr);
    double slow = l_update_bisection<double>(gam, cs, lr);
    CHECK(std::abs(fast - slow) < 1e-8);
  }
}

TEST_CASE("l_update: monotone in lambda/rho") {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  VectorXd gam(10), cs(10);
  for (int i = 0; i < 10; ++i) {
    gam(i) = u(rng);
    cs(i) = std::abs(u(rng));
  }
  double prev = l_update<double>(gam, cs, 0.0);
  for (double lr = 0.1; lr < 3.0; lr += 0.1) {
    double cur = l_update<double>(gam, cs, lr);
    CHECK(cur <= prev + 1e-12);
    prev = cur;
  }
}
