#ifndef CVXLEARN_MODEL_HPP
#define CVXLEARN_MODEL_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cvxlearn/dataset.hpp"

namespace cvxlearn {

// f(x) = max_i <a_i, x - x_i> + b_i, stored together with the normalization
// that was active during training.  Raw-unit inputs are normalized on entry
// and regression outputs are mapped back to raw units.
template <class Scalar>
struct MaxAffineModel {
  Mat<Scalar> anchors;  // n x d
  Mat<Scalar> slopes;   // n x d
  Vec<Scalar> offsets;  // n
  NormalizationState<Scalar> norm;

  Eigen::Index n() const { return anchors.rows(); }
  Eigen::Index d() const { return anchors.cols(); }

  // Value of the max in normalized coordinates plus the lowest attaining index.
  std::pair<Scalar, Eigen::Index> evaluate_normalized(const Vec<Scalar>& xn) const {
    Scalar best = -std::numeric_limits<Scalar>::infinity();
    Eigen::Index arg = 0;
    for (Eigen::Index i = 0; i < n(); ++i) {
      Scalar v = slopes.row(i).dot(xn - anchors.row(i).transpose()) + offsets(i);
      if (v > best) {
        best = v;
        arg = i;
      }
    }
    return {best, arg};
  }
};

template <class Scalar>
std::pair<Scalar, Eigen::Index> evaluate(const MaxAffineModel<Scalar>& m,
                                         const Vec<Scalar>& x_raw) {
  if (x_raw.size() != m.d())
    throw std::invalid_argument("evaluate: input dimension mismatch");
  if (!x_raw.allFinite()) throw std::invalid_argument("evaluate: non-finite input");
  auto [v, idx] = m.evaluate_normalized(m.norm.apply_x(x_raw));
  return {m.norm.invert_y(v), idx};
}

template <class Scalar>
struct DcModel {
  MaxAffineModel<Scalar> phi1;
  MaxAffineModel<Scalar> phi2;  // shares anchors and normalization with phi1
};

template <class Scalar>
Scalar dc_evaluate(const DcModel<Scalar>& m, const Vec<Scalar>& x_raw) {
  if (x_raw.size() != m.phi1.d())
    throw std::invalid_argument("dc_evaluate: input dimension mismatch");
  Vec<Scalar> xn = m.phi1.norm.apply_x(x_raw);
  Scalar v1 = m.phi1.evaluate_normalized(xn).first;
  Scalar v2 = m.phi2.evaluate_normalized(xn).first;
  // Un-normalize once on the difference.
  return m.phi1.norm.invert_y(v1 - v2);
}

template <class Scalar>
struct BregmanModel {
  MaxAffineModel<Scalar> generator;  // offsets are the trained z_i
  std::vector<int> train_labels;
};

// D(x, anchor_j) = f(x) - b_j - <a_j, x' - x_j> in normalized coordinates.
// Non-negative because the max dominates plane j.
template <class Scalar>
Scalar bregman_divergence(const BregmanModel<Scalar>& m, const Vec<Scalar>& x_raw,
                          Eigen::Index j) {
  if (j < 0 || j >= m.generator.n())
    throw std::out_of_range("bregman_divergence: index out of range");
  if (x_raw.size() != m.generator.d())
    throw std::invalid_argument("bregman_divergence: input dimension mismatch");
  Vec<Scalar> xn = m.generator.norm.apply_x(x_raw);
  Scalar f = m.generator.evaluate_normalized(xn).first;
  Scalar plane = m.generator.slopes.row(j).dot(xn - m.generator.anchors.row(j).transpose()) +
                 m.generator.offsets(j);
  return f - plane;
}

// Majority label among the k anchors closest in learned divergence.  Majority
// ties break by smallest total divergence, then smallest label.
template <class Scalar>
int predict_knn(const BregmanModel<Scalar>& m, const Vec<Scalar>& x_raw, int k = 5) {
  if (k < 1) throw std::invalid_argument("predict_knn: k must be >= 1");
  const Eigen::Index n = m.generator.n();
  k = static_cast<int>(std::min<Eigen::Index>(k, n));
  std::vector<std::pair<Scalar, Eigen::Index>> divs(static_cast<size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j)
    divs[static_cast<size_t>(j)] = {bregman_divergence(m, x_raw, j), j};
  std::stable_sort(divs.begin(), divs.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::map<int, std::pair<int, Scalar>> votes;  // label -> (count, total divergence)
  for (int r = 0; r < k; ++r) {
    int lab = m.train_labels[static_cast<size_t>(divs[static_cast<size_t>(r)].second)];
    auto& v = votes[lab];
    v.first += 1;
    v.second += divs[static_cast<size_t>(r)].first;
  }
  int best_label = votes.begin()->first;
  auto best = votes.begin()->second;
  for (const auto& [lab, v] : votes) {
    if (v.first > best.first ||
        (v.first == best.first && v.second < best.second) ||
        (v.first == best.first && v.second == best.second && lab < best_label)) {
      best_label = lab;
      best = v;
    }
  }
  return best_label;
}

// ---------------------------------------------------------------------------
// JSON persistence.  One self-describing document per model:
// {"schema":1, "kind":"convex"|"dc"|"bregman", "n", "d", "anchors", "slopes",
//  "offsets", "norm":{...}, "slopes2"/"offsets2" (dc), "labels" (bregman)}.
// ---------------------------------------------------------------------------

namespace detail {

template <class Scalar>
nlohmann::json matrix_to_json(const Mat<Scalar>& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(static_cast<double>(M(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

template <class Scalar>
nlohmann::json vector_to_json(const Vec<Scalar>& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(static_cast<double>(v(i)));
  return arr;
}

inline const nlohmann::json& require(const nlohmann::json& j, const std::string& field) {
  auto it = j.find(field);
  if (it == j.end())
    throw std::runtime_error("model file: missing field \"" + field + "\"");
  return *it;
}

template <class Scalar>
Mat<Scalar> matrix_from_json(const nlohmann::json& j, Eigen::Index n, Eigen::Index d,
                             const std::string& field) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n)
    throw std::runtime_error("model file: field \"" + field + "\" has wrong shape");
  Mat<Scalar> M(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = j[static_cast<size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != d)
      throw std::runtime_error("model file: field \"" + field + "\" has wrong shape");
    for (Eigen::Index c = 0; c < d; ++c) {
      double v = row[static_cast<size_t>(c)].template get<double>();
      if (!std::isfinite(v))
        throw std::runtime_error("model file: non-finite value in \"" + field + "\"");
      M(i, c) = static_cast<Scalar>(v);
    }
  }
  return M;
}

template <class Scalar>
Vec<Scalar> vector_from_json(const nlohmann::json& j, Eigen::Index n, const std::string& field) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n)
    throw std::runtime_error("model file: field \"" + field + "\" has wrong shape");
  Vec<Scalar> v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double x = j[static_cast<size_t>(i)].template get<double>();
    if (!std::isfinite(x))
      throw std::runtime_error("model file: non-finite value in \"" + field + "\"");
    v(i) = static_cast<Scalar>(x);
  }
  return v;
}

template <class Scalar>
nlohmann::json norm_to_json(const NormalizationState<Scalar>& st) {
  return nlohmann::json{{"x_center", vector_to_json(st.x_center)},
                        {"x_scale", vector_to_json(st.x_scale)},
                        {"y_center", static_cast<double>(st.y_center)},
                        {"y_scale", static_cast<double>(st.y_scale)}};
}

template <class Scalar>
NormalizationState<Scalar> norm_from_json(const nlohmann::json& j, Eigen::Index d) {
  NormalizationState<Scalar> st;
  st.x_center = vector_from_json<Scalar>(require(j, "x_center"), d, "norm.x_center");
  st.x_scale = vector_from_json<Scalar>(require(j, "x_scale"), d, "norm.x_scale");
  st.y_center = static_cast<Scalar>(require(j, "y_center").get<double>());
  st.y_scale = static_cast<Scalar>(require(j, "y_scale").get<double>());
  if (!(st.x_scale.minCoeff() > Scalar(0)) || !(st.y_scale > Scalar(0)))
    throw std::runtime_error("model file: non-positive normalization scale");
  return st;
}

template <class Scalar>
nlohmann::json max_affine_to_json(const MaxAffineModel<Scalar>& m) {
  return nlohmann::json{{"anchors", matrix_to_json(m.anchors)},
                        {"slopes", matrix_to_json(m.slopes)},
                        {"offsets", vector_to_json(m.offsets)},
                        {"norm", norm_to_json(m.norm)}};
}

inline nlohmann::json read_model_json(const std::string& path, const std::string& expected_kind) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("model file: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("model file: malformed JSON in " + path + ": " + e.what());
  }
  int schema = require(j, "schema").get<int>();
  if (schema != 1)
    throw std::runtime_error("model file: unsupported schema version " + std::to_string(schema));
  std::string kind = require(j, "kind").get<std::string>();
  if (kind != expected_kind)
    throw std::runtime_error("model file: kind mismatch, expected \"" + expected_kind +
                             "\" got \"" + kind + "\"");
  return j;
}

inline void write_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("model file: cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace detail

inline std::string peek_model_kind(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("model file: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return detail::require(j, "kind").get<std::string>();
}

template <class Scalar>
void save(const MaxAffineModel<Scalar>& m, const std::string& path) {
  nlohmann::json j = detail::max_affine_to_json(m);
  j["schema"] = 1;
  j["kind"] = "convex";
  j["n"] = m.n();
  j["d"] = m.d();
  detail::write_json(j, path);
}

template <class Scalar>
void save(const DcModel<Scalar>& m, const std::string& path) {
  nlohmann::json j = detail::max_affine_to_json(m.phi1);
  j["schema"] = 1;
  j["kind"] = "dc";
  j["n"] = m.phi1.n();
  j["d"] = m.phi1.d();
  j["slopes2"] = detail::matrix_to_json(m.phi2.slopes);
  j["offsets2"] = detail::vector_to_json(m.phi2.offsets);
  detail::write_json(j, path);
}

template <class Scalar>
void save(const BregmanModel<Scalar>& m, const std::string& path) {
  nlohmann::json j = detail::max_affine_to_json(m.generator);
  j["schema"] = 1;
  j["kind"] = "bregman";
  j["n"] = m.generator.n();
  j["d"] = m.generator.d();
  j["labels"] = m.train_labels;
  detail::write_json(j, path);
}

template <class Scalar>
MaxAffineModel<Scalar> load_max_affine_fields(const nlohmann::json& j) {
  Eigen::Index n = detail::require(j, "n").get<Eigen::Index>();
  Eigen::Index d = detail::require(j, "d").get<Eigen::Index>();
  MaxAffineModel<Scalar> m;
  m.anchors = detail::matrix_from_json<Scalar>(detail::require(j, "anchors"), n, d, "anchors");
  m.slopes = detail::matrix_from_json<Scalar>(detail::require(j, "slopes"), n, d, "slopes");
  m.offsets = detail::vector_from_json<Scalar>(detail::require(j, "offsets"), n, "offsets");
  m.norm = detail::norm_from_json<Scalar>(detail::require(j, "norm"), d);
  return m;
}

template <class Scalar>
MaxAffineModel<Scalar> load_convex(const std::string& path) {
  return load_max_affine_fields<Scalar>(detail::read_model_json(path, "convex"));
}

template <class Scalar>
DcModel<Scalar> load_dc(const std::string& path) {
  nlohmann::json j = detail::read_model_json(path, "dc");
  DcModel<Scalar> m;
  m.phi1 = load_max_affine_fields<Scalar>(j);
  m.phi2 = m.phi1;
  m.phi2.slopes = detail::matrix_from_json<Scalar>(detail::require(j, "slopes2"), m.phi1.n(),
                                                   m.phi1.d(), "slopes2");
  m.phi2.offsets =
      detail::vector_from_json<Scalar>(detail::require(j, "offsets2"), m.phi1.n(), "offsets2");
  return m;
}

template <class Scalar>
BregmanModel<Scalar> load_bregman(const std::string& path) {
  nlohmann::json j = detail::read_model_json(path, "bregman");
  BregmanModel<Scalar> m;
  m.generator = load_max_affine_fields<Scalar>(j);
  m.train_labels = detail::require(j, "labels").get<std::vector<int>>();
  if (m.train_labels.size() != static_cast<size_t>(m.generator.n()))
    throw std::runtime_error("model file: labels length mismatch");
  return m;
}

}  // namespace cvxlearn

#endif  // CVXLEARN_MODEL_HPP
