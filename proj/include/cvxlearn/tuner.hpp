#ifndef CVXLEARN_TUNER_HPP
#define CVXLEARN_TUNER_HPP

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <future>
#include <limits>
#include <numeric>
#include <random>
#include <thread>
#include <variant>
#include <vector>

#include "cvxlearn/bregman_fit.hpp"
#include "cvxlearn/convex_fit.hpp"
#include "cvxlearn/dc_fit.hpp"

namespace cvxlearn {

enum class Task { convex, dc, bregman };

inline const char* task_name(Task t) {
  switch (t) {
    case Task::convex: return "convex";
    case Task::dc: return "dc";
    case Task::bregman: return "bregman";
  }
  return "?";
}

template <class Scalar>
struct TuneConfig {
  std::vector<Scalar> grid;    // strictly positive, sorted ascending
  int folds = 5;
  int refine_rounds = 2;       // at most 2
  Task task = Task::convex;
  int knn_k = 5;
  unsigned seed = 0;
  Scalar rho = Scalar(0.01);   // tuning preset; pass <= 0 for sqrt(d) lambda^2/n

  static std::vector<Scalar> default_grid() {
    std::vector<Scalar> g;
    for (int e = -3; e <= 3; ++e) g.push_back(std::pow(Scalar(10), Scalar(e)));
    return g;
  }
};

struct TuneRow {
  double lambda;
  int fold;       // -1 for aggregate rows is never used; folds are 0-based
  double metric;  // validation MSE (regression) or accuracy (classification)
  int iters_run;
  double seconds;
  int round;      // 0 = initial grid, 1..2 = refinement
};

struct TuneReport {
  std::vector<TuneRow> rows;
  std::vector<std::pair<double, double>> lambda_mean_std;  // per evaluated lambda
  std::vector<double> refinement_incumbents;               // incumbent after each round
  double chosen_lambda = 0;
};

// Deterministic fold assignment: indices shuffled by `seed`, dealt round-robin
// so fold sizes differ by at most one.
inline std::vector<int> kfold_split(Eigen::Index n, int folds, unsigned seed) {
  if (folds < 2) throw std::invalid_argument("kfold_split: folds must be >= 2");
  if (folds > n) throw std::invalid_argument("kfold_split: folds > n");
  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  std::mt19937 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> assign(static_cast<size_t>(n));
  for (size_t r = 0; r < order.size(); ++r)
    assign[static_cast<size_t>(order[r])] = static_cast<int>(r % static_cast<size_t>(folds));
  return assign;
}

namespace detail {

template <class Scalar>
Dataset<Scalar> subset(const Dataset<Scalar>& data, const std::vector<int>& assign, int fold,
                       bool take_fold) {
  Dataset<Scalar> out;
  out.classification = data.classification;
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < data.n(); ++i)
    if ((assign[static_cast<size_t>(i)] == fold) == take_fold) rows.push_back(i);
  out.X.resize(static_cast<Eigen::Index>(rows.size()), data.d());
  if (!data.classification) out.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (size_t r = 0; r < rows.size(); ++r) {
    out.X.row(static_cast<Eigen::Index>(r)) = data.X.row(rows[r]);
    if (data.classification)
      out.labels.push_back(data.labels[static_cast<size_t>(rows[r])]);
    else
      out.y(static_cast<Eigen::Index>(r)) = data.y(rows[r]);
  }
  return out;
}

inline int thread_budget() {
  if (const char* env = std::getenv("CVXLEARN_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

// Run `tasks` on a bounded pool; results land at their task index, so the
// assembled output is independent of scheduling order.
template <class Result>
std::vector<Result> run_pool(const std::vector<std::function<Result()>>& tasks) {
  std::vector<Result> results(tasks.size());
  const size_t width = static_cast<size_t>(std::max(1, thread_budget()));
  size_t next = 0;
  while (next < tasks.size()) {
    size_t batch = std::min(width, tasks.size() - next);
    std::vector<std::future<Result>> futs;
    for (size_t k = 0; k < batch; ++k)
      futs.push_back(std::async(std::launch::async, tasks[next + k]));
    for (size_t k = 0; k < batch; ++k) results[next + k] = futs[k].get();
    next += batch;
  }
  return results;
}

}  // namespace detail

template <class Scalar>
using TunedModel =
    std::variant<ConvexFitResult<Scalar>, DcFitResult<Scalar>, BregmanFitResult<Scalar>>;

template <class Scalar>
struct TuneResult {
  Scalar best_lambda = 0;
  TuneReport report;
  TunedModel<Scalar> final_model;
};

namespace detail {

// One (lambda, fold) evaluation.  Divergence marks the cell as failed with an
// infinitely bad metric rather than aborting the search.
template <class Scalar>
TuneRow evaluate_cell(const Dataset<Scalar>& data, const std::vector<int>& assign, int fold,
                      Scalar lambda, const TuneConfig<Scalar>& tc,
                      const FitConfig<Scalar>& tmpl, int round) {
  Dataset<Scalar> train = subset(data, assign, fold, false);
  Dataset<Scalar> val = subset(data, assign, fold, true);
  FitConfig<Scalar> fc = tmpl;
  fc.lambda = lambda;
  fc.rho = tc.rho;
  fc.early_stop = true;
  auto t0 = std::chrono::steady_clock::now();
  TuneRow row{static_cast<double>(lambda), fold, 0.0, 0, 0.0, round};
  const double bad = tc.task == Task::bregman ? -std::numeric_limits<double>::infinity()
                                              : std::numeric_limits<double>::infinity();
  try {
    if (tc.task == Task::convex) {
      auto fr = fit_convex(train, fc);
      double mse = 0;
      for (Eigen::Index i = 0; i < val.n(); ++i) {
        Vec<Scalar> x = val.X.row(i).transpose();
        double pred = static_cast<double>(evaluate(fr.model, x).first);
        double diff = pred - static_cast<double>(val.y(i));
        mse += diff * diff;
      }
      row.metric = mse / static_cast<double>(val.n());
      row.iters_run = fr.report.iters_run;
    } else if (tc.task == Task::dc) {
      auto fr = fit_dc(train, fc);
      double mse = 0;
      for (Eigen::Index i = 0; i < val.n(); ++i) {
        Vec<Scalar> x = val.X.row(i).transpose();
        double pred = static_cast<double>(dc_evaluate(fr.model, x));
        double diff = pred - static_cast<double>(val.y(i));
        mse += diff * diff;
      }
      row.metric = mse / static_cast<double>(val.n());
      row.iters_run = fr.report.iters_run;
    } else {
      auto fr = fit_bregman(train, fc);
      int correct = 0;
      for (Eigen::Index i = 0; i < val.n(); ++i) {
        Vec<Scalar> x = val.X.row(i).transpose();
        if (predict_knn(fr.model, x, tc.knn_k) == val.labels[static_cast<size_t>(i)])
          ++correct;
      }
      row.metric = static_cast<double>(correct) / static_cast<double>(val.n());
      row.iters_run = fr.report.iters_run;
    }
  } catch (const DivergenceError&) {
    row.metric = bad;
  }
  row.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

// Lower is better for MSE, higher for accuracy; normalize to "lower is better".
inline double score_of(double metric, Task task) {
  return task == Task::bregman ? -metric : metric;
}

}  // namespace detail

template <class Scalar>
TuneResult<Scalar> tune(const Dataset<Scalar>& data, const TuneConfig<Scalar>& tc,
                        const FitConfig<Scalar>& tmpl) {
  std::vector<Scalar> grid = tc.grid.empty() ? TuneConfig<Scalar>::default_grid() : tc.grid;
  for (size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > Scalar(0)))
      throw std::invalid_argument("tune: grid values must be positive");
    if (i > 0 && !(grid[i] > grid[i - 1]))
      throw std::invalid_argument("tune: grid must be strictly ascending");
  }
  if (tc.refine_rounds < 0 || tc.refine_rounds > 2)
    throw std::invalid_argument("tune: refine_rounds must be in [0, 2]");
  std::vector<int> assign = kfold_split(data.n(), tc.folds, tc.seed);

  TuneReport report;
  std::vector<Scalar> evaluated;           // lambdas in evaluation order
  std::vector<double> mean_score;          // aggregate score per evaluated lambda

  auto run_round = [&](const std::vector<Scalar>& lams, int round) {
    std::vector<std::function<TuneRow()>> tasks;
    for (Scalar lam : lams)
      for (int f = 0; f < tc.folds; ++f)
        tasks.push_back([&, lam, f, round] {
          return detail::evaluate_cell(data, assign, f, lam, tc, tmpl, round);
        });
    std::vector<TuneRow> rows = detail::run_pool(tasks);
    for (size_t li = 0; li < lams.size(); ++li) {
      double sum = 0, sum2 = 0;
      for (int f = 0; f < tc.folds; ++f) {
        const TuneRow& r = rows[li * static_cast<size_t>(tc.folds) + static_cast<size_t>(f)];
        report.rows.push_back(r);
        sum += r.metric;
        sum2 += r.metric * r.metric;
      }
      double mean = sum / tc.folds;
      double var = std::max(0.0, sum2 / tc.folds - mean * mean);
      report.lambda_mean_std.emplace_back(mean, std::sqrt(var));
      evaluated.push_back(lams[li]);
      mean_score.push_back(detail::score_of(mean, tc.task));
    }
  };

  auto incumbent = [&]() -> Scalar {
    size_t best = 0;
    for (size_t i = 1; i < evaluated.size(); ++i) {
      if (mean_score[i] < mean_score[best] ||
          (mean_score[i] == mean_score[best] && evaluated[i] < evaluated[best]))
        best = i;
    }
    return evaluated[best];
  };

  run_round(grid, 0);
  report.refinement_incumbents.push_back(static_cast<double>(incumbent()));

  for (int round = 1; round <= tc.refine_rounds; ++round) {
    Scalar inc = incumbent();
    // Neighbors of the incumbent in the *current* evaluated set, sorted.
    std::vector<Scalar> sorted(evaluated);
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    auto it = std::find(sorted.begin(), sorted.end(), inc);
    Scalar lo, hi;
    if (it == sorted.begin())
      lo = inc * inc / *(it + 1);  // extend one log-step below
    else
      lo = *(it - 1);
    if (it + 1 == sorted.end())
      hi = inc * inc / *(it - 1);  // extend one log-step above
    else
      hi = *(it + 1);
    // 5 log-spaced points spanning [lo, hi].
    std::vector<Scalar> next;
    for (int k = 0; k < 5; ++k) {
      Scalar t = Scalar(k) / Scalar(4);
      Scalar lam = std::exp(std::log(lo) * (Scalar(1) - t) + std::log(hi) * t);
      bool dup = false;
      for (Scalar e : evaluated)
        if (std::abs(std::log(lam) - std::log(e)) < Scalar(1e-12)) dup = true;
      if (!dup) next.push_back(lam);
    }
    if (!next.empty()) run_round(next, round);
    report.refinement_incumbents.push_back(static_cast<double>(incumbent()));
  }

  TuneResult<Scalar> out;
  out.best_lambda = incumbent();
  report.chosen_lambda = static_cast<double>(out.best_lambda);
  out.report = std::move(report);

  FitConfig<Scalar> fc = tmpl;
  fc.lambda = out.best_lambda;
  fc.rho = tc.rho;  // same rho as tuning for consistency
  if (tc.task == Task::convex)
    out.final_model = fit_convex(data, fc);
  else if (tc.task == Task::dc)
    out.final_model = fit_dc(data, fc);
  else
    out.final_model = fit_bregman(data, fc);
  return out;
}

inline void write_tune_report_csv(const TuneReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "lambda,fold,metric,iters_run,seconds\n";
  char buf[256];
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof(buf), "%.17g,%d,%.17g,%d,%.6g\n", row.lambda, row.fold,
                  row.metric, row.iters_run, row.seconds);
    out << buf;
  }
}

}  // namespace cvxlearn

#endif  // CVXLEARN_TUNER_HPP
