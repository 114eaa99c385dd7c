#ifndef CVXLEARN_DATASET_HPP
#define CVXLEARN_DATASET_HPP

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace cvxlearn {

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Predictors plus either real responses (regression) or integer labels
// (classification).  Labels are carried in `labels` and `y` is ignored in
// classification mode.
template <class Scalar>
struct Dataset {
  Mat<Scalar> X;                 // n x d
  Vec<Scalar> y;                 // n (regression)
  std::vector<int> labels;       // n (classification), empty otherwise
  bool classification = false;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index d() const { return X.cols(); }

  void validate() const {
    if (X.rows() < 1 || X.cols() < 1)
      throw std::invalid_argument("dataset: need n >= 1 and d >= 1");
    if (!X.allFinite())
      throw std::invalid_argument("dataset: non-finite predictor entry");
    if (classification) {
      if (static_cast<Eigen::Index>(labels.size()) != X.rows())
        throw std::invalid_argument("dataset: label count != row count");
      for (int l : labels)
        if (l < 0) throw std::invalid_argument("dataset: negative label");
    } else {
      if (y.size() != X.rows())
        throw std::invalid_argument("dataset: response count != row count");
      if (!y.allFinite())
        throw std::invalid_argument("dataset: non-finite response entry");
    }
  }
};

// Affine transform bringing predictors to zero-mean / max-abs <= 1 columns and
// responses to zero-mean / unit-variance.  Scales are floored so constant
// columns normalize to all-zero instead of dividing by zero.
template <class Scalar>
struct NormalizationState {
  Vec<Scalar> x_center;   // d
  Vec<Scalar> x_scale;    // d, > 0
  Scalar y_center = 0;
  Scalar y_scale = 1;
  std::vector<std::string> warnings;

  static constexpr Scalar scale_floor() { return Scalar(1e-12); }

  static NormalizationState identity(Eigen::Index d) {
    NormalizationState s;
    s.x_center = Vec<Scalar>::Zero(d);
    s.x_scale = Vec<Scalar>::Ones(d);
    return s;
  }

  Vec<Scalar> apply_x(const Vec<Scalar>& x) const {
    return ((x - x_center).array() / x_scale.array()).matrix();
  }
  Scalar apply_y(Scalar v) const { return (v - y_center) / y_scale; }
  Scalar invert_y(Scalar v) const { return v * y_scale + y_center; }
};

template <class Scalar>
std::pair<Dataset<Scalar>, NormalizationState<Scalar>> normalize(
    const Dataset<Scalar>& raw) {
  raw.validate();
  const Eigen::Index n = raw.n(), d = raw.d();
  NormalizationState<Scalar> st;
  st.x_center = raw.X.colwise().mean().transpose();
  Mat<Scalar> Xc = raw.X.rowwise() - st.x_center.transpose();
  st.x_scale = Xc.cwiseAbs().colwise().maxCoeff().transpose();
  for (Eigen::Index l = 0; l < d; ++l) {
    if (st.x_scale(l) < NormalizationState<Scalar>::scale_floor()) {
      st.x_scale(l) = NormalizationState<Scalar>::scale_floor();
      st.warnings.push_back("constant feature column " + std::to_string(l) +
                            ": scale floored, column becomes zero");
      Xc.col(l).setZero();
    }
  }
  Dataset<Scalar> out;
  out.X = Xc.array().rowwise() / st.x_scale.transpose().array();
  out.classification = raw.classification;
  out.labels = raw.labels;
  if (!raw.classification) {
    st.y_center = raw.y.mean();
    Vec<Scalar> yc = raw.y.array() - st.y_center;
    // Population standard deviation (divide by n, not n-1).
    st.y_scale = std::sqrt(yc.squaredNorm() / Scalar(n));
    if (st.y_scale < NormalizationState<Scalar>::scale_floor()) {
      st.y_scale = NormalizationState<Scalar>::scale_floor();
      st.warnings.push_back("constant response: scale floored");
      out.y = Vec<Scalar>::Zero(n);
    } else {
      out.y = yc / st.y_scale;
    }
  }
  return {out, st};
}

}  // namespace cvxlearn

#endif  // CVXLEARN_DATASET_HPP
