#include <doctest.h>

#include <map>

#include "cvxlearn/synth.hpp"
#include "cvxlearn/tuner.hpp"

using namespace cvxlearn;

namespace {

std::map<int, int> fold_sizes(const std::vector<int>& assign) {
  std::map<int, int> sizes;
  for (int f : assign) ++sizes[f];
  return sizes;
}

}  // namespace

TEST_CASE("kfold_split: even split") {
  auto assign = kfold_split(10, 5, 0);
  auto sizes = fold_sizes(assign);
  CHECK(sizes.size() == 5);
  for (auto& [f, c] : sizes) {
    CHECK(f >= 0);
    CHECK(f < 5);
    CHECK(c == 2);
  }
}

TEST_CASE("kfold_split: uneven split differs by at most one") {
  auto assign = kfold_split(7, 5, 3);
  auto sizes = fold_sizes(assign);
  CHECK(sizes.size() == 5);
  int twos = 0, ones = 0;
  for (auto& [f, c] : sizes) {
    if (c == 2) ++twos;
    if (c == 1) ++ones;
  }
  CHECK(twos == 2);
  CHECK(ones == 3);
}

TEST_CASE("kfold_split: deterministic in the seed") {
  CHECK(kfold_split(20, 4, 9) == kfold_split(20, 4, 9));
  CHECK(kfold_split(20, 4, 9) != kfold_split(20, 4, 10));
}

TEST_CASE("kfold_split: boundary and error cases") {
  auto assign = kfold_split(5, 5, 1);  // leave-one-out
  auto sizes = fold_sizes(assign);
  CHECK(sizes.size() == 5);
  for (auto& [f, c] : sizes) CHECK(c == 1);
  CHECK_THROWS_AS(kfold_split(4, 5, 0), std::invalid_argument);
  CHECK_THROWS_AS(kfold_split(4, 1, 0), std::invalid_argument);
}

TEST_CASE("tune: rejects malformed grids and round counts") {
  auto data = synth_dataset<double>(Task::convex, 12, 1, 0.1, 0);
  TuneConfig<double> tc;
  tc.folds = 3;
  FitConfig<double> tmpl;
  tmpl.max_iters = 20;
  tc.grid = {0.1, 0.1};
  CHECK_THROWS_AS(tune(data, tc, tmpl), std::invalid_argument);
  tc.grid = {-1.0, 0.1};
  CHECK_THROWS_AS(tune(data, tc, tmpl), std::invalid_argument);
  tc.grid = {0.1, 1.0};
  tc.refine_rounds = 3;
  CHECK_THROWS_AS(tune(data, tc, tmpl), std::invalid_argument);
}

TEST_CASE("tune: ties break toward the smaller lambda") {
  // Constant responses: every lambda fits the zero model perfectly, so all
  // validation scores tie and the smallest grid value must win.
  Dataset<double> data;
  data.X.resize(9, 1);
  data.X << -1, -0.7, -0.4, -0.1, 0.1, 0.4, 0.7, 0.9, 1.0;
  data.y = Eigen::VectorXd::Constant(9, 2.0);
  TuneConfig<double> tc;
  tc.folds = 3;
  tc.refine_rounds = 0;
  tc.grid = {0.01, 0.1, 1.0};
  FitConfig<double> tmpl;
  tmpl.max_iters = 50;
  auto r = tune(data, tc, tmpl);
  CHECK(r.best_lambda == doctest::Approx(0.01));
}

TEST_CASE("tune: refinement never worsens the incumbent") {
  for (unsigned seed = 0; seed < 5; ++seed) {
    auto data = synth_dataset<double>(Task::convex, 24, 2, 0.2, seed);
    TuneConfig<double> tc;
    tc.folds = 4;
    tc.refine_rounds = 2;
    tc.seed = seed;
    tc.grid = {1e-3, 1e-2, 1e-1, 1.0};
    FitConfig<double> tmpl;
    tmpl.max_iters = 150;
    auto r = tune(data, tc, tmpl);
    REQUIRE(r.report.refinement_incumbents.size() == 3);
    // Recover the mean score of each incumbent from the per-round aggregates.
    auto score_at = [&](double lam) {
      size_t idx = 0;
      // lambda_mean_std entries are aligned with evaluation order; find lam.
      std::vector<double> lams;
      for (const auto& row : r.report.rows)
        if (lams.empty() || std::find(lams.begin(), lams.end(), row.lambda) == lams.end())
          lams.push_back(row.lambda);
      for (size_t i = 0; i < lams.size(); ++i)
        if (lams[i] == lam) idx = i;
      return r.report.lambda_mean_std[idx].first;
    };
    double s0 = score_at(r.report.refinement_incumbents[0]);
    double s2 = score_at(r.report.refinement_incumbents[2]);
    CHECK(s2 <= s0 + 1e-12);
    CHECK(r.best_lambda == doctest::Approx(r.report.refinement_incumbents[2]));
  }
}

TEST_CASE("tune: report rows cover every (lambda, fold) cell of the first round") {
  auto data = synth_dataset<double>(Task::convex, 15, 1, 0.1, 2);
  TuneConfig<double> tc;
  tc.folds = 3;
  tc.refine_rounds = 0;
  tc.grid = {0.01, 0.1};
  FitConfig<double> tmpl;
  tmpl.max_iters = 60;
  auto r = tune(data, tc, tmpl);
  CHECK(r.report.rows.size() == 6);
  std::map<std::pair<double, int>, int> seen;
  for (const auto& row : r.report.rows) {
    ++seen[{row.lambda, row.fold}];
    CHECK(row.metric >= 0.0);
    CHECK(row.iters_run > 0);
    CHECK(row.seconds >= 0.0);
  }
  CHECK(seen.size() == 6);
}

TEST_CASE("tune: classification task maximizes accuracy") {
  auto data = synth_dataset<double>(Task::bregman, 20, 2, 0.0, 4);
  TuneConfig<double> tc;
  tc.task = Task::bregman;
  tc.folds = 4;
  tc.refine_rounds = 0;
  tc.knn_k = 3;
  tc.grid = {0.01, 0.1, 1.0};
  FitConfig<double> tmpl;
  tmpl.max_iters = 300;
  auto r = tune(data, tc, tmpl);
  // Well-separated blobs: the chosen lambda should reach perfect accuracy.
  bool found = false;
  for (size_t i = 0; i < r.report.lambda_mean_std.size(); ++i)
    if (r.report.lambda_mean_std[i].first == doctest::Approx(1.0)) found = true;
  CHECK(found);
  auto* model = std::get_if<BregmanFitResult<double>>(&r.final_model);
  REQUIRE(model != nullptr);
  int correct = 0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    Eigen::VectorXd x = data.X.row(i).transpose();
    if (predict_knn(model->model, x, tc.knn_k) == data.labels[size_t(i)]) ++correct;
  }
  CHECK(correct == 20);
}

TEST_CASE("tune: deterministic for a fixed seed") {
  auto data = synth_dataset<double>(Task::convex, 20, 2, 0.3, 5);
  TuneConfig<double> tc;
  tc.folds = 4;
  tc.refine_rounds = 1;
  tc.seed = 11;
  tc.grid = {1e-2, 1e-1, 1.0};
  FitConfig<double> tmpl;
  tmpl.max_iters = 100;
  auto r1 = tune(data, tc, tmpl);
  auto r2 = tune(data, tc, tmpl);
  CHECK(r1.best_lambda == r2.best_lambda);
  REQUIRE(r1.report.rows.size() == r2.report.rows.size());
  for (size_t i = 0; i < r1.report.rows.size(); ++i) {
    CHECK(r1.report.rows[i].lambda == r2.report.rows[i].lambda);
    CHECK(r1.report.rows[i].fold == r2.report.rows[i].fold);
    CHECK(r1.report.rows[i].metric == r2.report.rows[i].metric);
  }
}

TEST_CASE("tune: final model is refit on the full data at the chosen lambda") {
  auto data = synth_dataset<double>(Task::convex, 18, 1, 0.1, 6);
  TuneConfig<double> tc;
  tc.folds = 3;
  tc.refine_rounds = 0;
  tc.grid = {1e-3, 1e-2};
  FitConfig<double> tmpl;
  tmpl.max_iters = 200;
  auto r = tune(data, tc, tmpl);
  auto* model = std::get_if<ConvexFitResult<double>>(&r.final_model);
  REQUIRE(model != nullptr);
  CHECK(model->model.anchors.rows() == 18);  // trained on all points
  FitConfig<double> fc = tmpl;
  fc.lambda = r.best_lambda;
  fc.rho = tc.rho;
  auto direct = fit_convex(data, fc);
  CHECK((model->y_hat - direct.y_hat).cwiseAbs().maxCoeff() == 0.0);
}
