#ifndef CVXLEARN_SYNTH_HPP
#define CVXLEARN_SYNTH_HPP

#include <random>

#include "cvxlearn/dataset.hpp"
#include "cvxlearn/tuner.hpp"

namespace cvxlearn {

// Synthetic generators used by the CLI and the test harness.
//   convex:  y = ||x||^2 + eps,  x uniform on [-1, 1]^d
//   dc:      y = ||x||_1 - ||x||^2 + eps, same x
//   bregman: two Gaussian blobs (labels 0/1), centers +/- (1, 0, ..., 0),
//            per-coordinate sigma = 0.5 (center distance 2 = 4 sigma).
template <class Scalar>
Dataset<Scalar> synth_dataset(Task task, Eigen::Index n, Eigen::Index d, Scalar noise,
                              unsigned seed) {
  std::mt19937 rng(seed);
  Dataset<Scalar> out;
  out.X.resize(n, d);
  if (task == Task::bregman) {
    out.classification = true;
    std::normal_distribution<double> gauss(0.0, 0.5);
    for (Eigen::Index i = 0; i < n; ++i) {
      int label = static_cast<int>(i % 2);
      for (Eigen::Index l = 0; l < d; ++l) {
        double center = (l == 0) ? (label == 0 ? -1.0 : 1.0) : 0.0;
        out.X(i, l) = static_cast<Scalar>(center + gauss(rng));
      }
      out.labels.push_back(label);
    }
    return out;
  }
  out.y.resize(n);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index l = 0; l < d; ++l) out.X(i, l) = static_cast<Scalar>(unif(rng));
    Scalar sq = out.X.row(i).squaredNorm();
    Scalar val = task == Task::convex ? sq : out.X.row(i).cwiseAbs().sum() - sq;
    out.y(i) = val + noise * static_cast<Scalar>(gauss(rng));
  }
  return out;
}

}  // namespace cvxlearn

#endif  // CVXLEARN_SYNTH_HPP
