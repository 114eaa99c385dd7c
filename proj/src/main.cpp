// cvxlearn command-line driver: fit/predict/tune/synth/benchmark plus
// manifest-based reruns.  Exit codes: 0 success, 2 usage error, 3 numeric
// failure (solver divergence or singular system).
#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "cvxlearn/bregman_fit.hpp"
#include "cvxlearn/convex_fit.hpp"
#include "cvxlearn/csv.hpp"
#include "cvxlearn/dc_fit.hpp"
#include "cvxlearn/model.hpp"
#include "cvxlearn/synth.hpp"
#include "cvxlearn/tuner.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace cvxlearn;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

struct CommonArgs {
  std::string task = "convex";
  double lambda = 0.1;
  double rho = 0.0;
  bool rho_auto = false;
  int iters = 2000;
  bool early_stop = false;
  bool averaged = false;
  bool monotone = false;
  int k = 5;
  int folds = 5;
  std::string grid;  // comma-separated lambda grid
  unsigned seed = 0;
  std::string out_dir = ".";
  std::string input;
  int target_col = -1;
  bool no_header = false;
};

Task parse_task(const std::string& s) {
  if (s == "convex") return Task::convex;
  if (s == "dc") return Task::dc;
  if (s == "bregman") return Task::bregman;
  throw CLI::ValidationError("--task", "must be one of convex, dc, bregman");
}

std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> g;
  if (s.empty()) return g;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) g.push_back(std::stod(tok));
  return g;
}

json config_json(const CommonArgs& a) {
  return json{{"task", a.task},       {"lambda", a.lambda},
              {"rho", a.rho},         {"rho_auto", a.rho_auto},
              {"iters", a.iters},     {"early_stop", a.early_stop},
              {"averaged", a.averaged}, {"monotone", a.monotone},
              {"k", a.k},             {"folds", a.folds},
              {"grid", a.grid},       {"seed", a.seed},
              {"target_col", a.target_col}, {"no_header", a.no_header}};
}

void write_manifest(const std::string& command, const CommonArgs& a,
                    const json& extra = json::object()) {
  json m{{"command", command},
         {"input", a.input},
         {"config", config_json(a)},
         {"seed", a.seed},
         {"out_dir", a.out_dir},
         {"version", kVersion}};
  for (auto& [k, v] : extra.items()) m[k] = v;
  std::ofstream out(fs::path(a.out_dir) / "manifest.json");
  out << m.dump(2) << "\n";
}

FitConfig<double> make_fit_config(const CommonArgs& a, Eigen::Index /*n*/, Eigen::Index /*d*/) {
  FitConfig<double> fc;
  fc.lambda = a.lambda;
  fc.rho = a.rho_auto ? -1.0 : (a.rho > 0 ? a.rho : -1.0);
  fc.max_iters = a.iters;
  fc.early_stop = a.early_stop;
  fc.averaged_output = a.averaged;
  fc.monotone = a.monotone;
  return fc;
}

int cmd_fit(const CommonArgs& a) {
  Dataset<double> data =
      ingest_csv<double>(a.input, a.target_col, !a.no_header, a.task == "bregman");
  fs::create_directories(a.out_dir);
  FitConfig<double> fc = make_fit_config(a, data.n(), data.d());
  fs::path model_path = fs::path(a.out_dir) / "model.json";
  fs::path report_path = fs::path(a.out_dir) / "fit_report.csv";
  if (a.task == "convex") {
    auto r = fit_convex(data, fc);
    save(r.model, model_path.string());
    write_fit_report_csv(r.report, report_path.string());
  } else if (a.task == "dc") {
    auto r = fit_dc(data, fc);
    save(r.model, model_path.string());
    write_fit_report_csv(r.report, report_path.string());
  } else {
    auto r = fit_bregman(data, fc);
    if (r.single_class_warning)
      std::cerr << "warning: single-class dataset, learned divergence is degenerate\n";
    save(r.model, model_path.string());
    write_fit_report_csv(r.report, report_path.string());
  }
  write_manifest("fit", a);
  std::cout << "wrote " << model_path.string() << "\n";
  return kExitOk;
}

int cmd_predict(const CommonArgs& a, const std::string& model_path) {
  std::string kind = peek_model_kind(model_path);
  // Prediction inputs: CSV of raw-unit points, no target column.
  std::ifstream in(a.input);
  if (!in) throw std::runtime_error("cannot open " + a.input);
  std::string line;
  std::vector<std::vector<double>> pts;
  bool header_skipped = a.no_header;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (!header_skipped) {
      header_skipped = true;
      continue;
    }
    auto cells = cvxlearn::detail::split_csv_line(line);
    std::vector<double> v(cells.size());
    for (size_t c = 0; c < cells.size(); ++c)
      if (!cvxlearn::detail::parse_double(cells[c], v[c]))
        throw std::runtime_error("non-numeric cell \"" + cells[c] + "\" at (" +
                                 std::to_string(lineno) + ", " + std::to_string(c + 1) + ")");
    pts.push_back(std::move(v));
  }
  fs::create_directories(a.out_dir);
  fs::path out_path = fs::path(a.out_dir) / "predictions.csv";
  std::ofstream out(out_path);
  char buf[64];
  auto check_dim = [&](Eigen::Index d) {
    for (const auto& p : pts)
      if (static_cast<Eigen::Index>(p.size()) != d) {
        std::cerr << "error: input dimension " << p.size() << " != model dimension " << d
                  << "\n";
        std::exit(kExitUsage);
      }
  };
  if (kind == "convex") {
    auto m = load_convex<double>(model_path);
    check_dim(m.d());
    out << "prediction\n";
    for (const auto& p : pts) {
      Vec<double> x = Eigen::Map<const Vec<double>>(p.data(), static_cast<Eigen::Index>(p.size()));
      std::snprintf(buf, sizeof(buf), "%.17g\n", evaluate(m, x).first);
      out << buf;
    }
  } else if (kind == "dc") {
    auto m = load_dc<double>(model_path);
    check_dim(m.phi1.d());
    out << "prediction\n";
    for (const auto& p : pts) {
      Vec<double> x = Eigen::Map<const Vec<double>>(p.data(), static_cast<Eigen::Index>(p.size()));
      std::snprintf(buf, sizeof(buf), "%.17g\n", dc_evaluate(m, x));
      out << buf;
    }
  } else if (kind == "bregman") {
    auto m = load_bregman<double>(model_path);
    check_dim(m.generator.d());
    out << "label\n";
    for (const auto& p : pts) {
      Vec<double> x = Eigen::Map<const Vec<double>>(p.data(), static_cast<Eigen::Index>(p.size()));
      out << predict_knn(m, x, a.k) << "\n";
    }
  } else {
    throw std::runtime_error("unknown model kind " + kind);
  }
  CommonArgs ma = a;
  write_manifest("predict", ma, json{{"model", model_path}});
  std::cout << "wrote " << out_path.string() << "\n";
  return kExitOk;
}

int cmd_tune(const CommonArgs& a) {
  Dataset<double> data =
      ingest_csv<double>(a.input, a.target_col, !a.no_header, a.task == "bregman");
  fs::create_directories(a.out_dir);
  TuneConfig<double> tc;
  tc.task = parse_task(a.task);
  tc.folds = a.folds;
  tc.knn_k = a.k;
  tc.seed = a.seed;
  std::vector<double> grid = parse_grid(a.grid);
  if (!grid.empty()) tc.grid = grid;
  tc.rho = a.rho_auto ? -1.0 : (a.rho > 0 ? a.rho : 0.01);
  FitConfig<double> tmpl = make_fit_config(a, data.n(), data.d());
  auto result = tune(data, tc, tmpl);
  fs::path model_path = fs::path(a.out_dir) / "model.json";
  std::visit([&](const auto& r) { save(r.model, model_path.string()); }, result.final_model);
  write_tune_report_csv(result.report, (fs::path(a.out_dir) / "tune_report.csv").string());
  write_manifest("tune", a, json{{"chosen_lambda", result.report.chosen_lambda}});
  std::cout << "chosen lambda " << result.best_lambda << ", wrote " << model_path.string()
            << "\n";
  return kExitOk;
}

int cmd_synth(const CommonArgs& a, int n, int d, double noise) {
  fs::create_directories(a.out_dir);
  auto data = synth_dataset<double>(parse_task(a.task), n, d, noise, a.seed);
  fs::path out_path = fs::path(a.out_dir) / "data.csv";
  write_dataset_csv(data, out_path.string());
  write_manifest("synth", a, json{{"n", n}, {"d", d}, {"noise", noise}});
  std::cout << "wrote " << out_path.string() << "\n";
  return kExitOk;
}

int cmd_benchmark(const CommonArgs& a, const std::vector<int>& ns, const std::vector<int>& ds,
                  int iters) {
  fs::create_directories(a.out_dir);
  fs::path out_path = fs::path(a.out_dir) / "benchmark.csv";
  std::ofstream out(out_path);
  out << "n,d,seconds,millis_per_iter\n";
  std::vector<std::array<double, 3>> cells;  // log n, log d, log millis
  for (int n : ns)
    for (int d : ds) {
      auto data = synth_dataset<double>(Task::convex, n, d, 0.1, a.seed);
      FitConfig<double> fc;
      fc.lambda = a.lambda;
      fc.rho = a.rho > 0 ? a.rho : 0.01;
      fc.max_iters = iters;
      auto t0 = std::chrono::steady_clock::now();
      auto r = fit_convex(data, fc);
      double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      double per_iter = 0;
      for (const auto& row : r.report.rows) per_iter += row.millis;
      per_iter /= std::max<size_t>(1, r.report.rows.size());
      char buf[128];
      std::snprintf(buf, sizeof(buf), "%d,%d,%.6g,%.6g\n", n, d, secs, per_iter);
      out << buf;
      cells.push_back({std::log(static_cast<double>(n)), std::log(static_cast<double>(d)),
                       std::log(per_iter)});
    }
  // Least-squares fit log t = c + p log n + q log d across the grid.
  if (cells.size() >= 3) {
    Eigen::MatrixXd A(static_cast<Eigen::Index>(cells.size()), 3);
    Eigen::VectorXd b(static_cast<Eigen::Index>(cells.size()));
    for (size_t i = 0; i < cells.size(); ++i) {
      A(static_cast<Eigen::Index>(i), 0) = 1.0;
      A(static_cast<Eigen::Index>(i), 1) = cells[i][0];
      A(static_cast<Eigen::Index>(i), 2) = cells[i][1];
      b(static_cast<Eigen::Index>(i)) = cells[i][2];
    }
    Eigen::VectorXd coef = A.colPivHouseholderQr().solve(b);
    std::cout << "per-iteration scaling exponents: n^" << coef(1) << " d^" << coef(2) << "\n";
    write_manifest("benchmark", a,
                   json{{"exponent_n", coef(1)}, {"exponent_d", coef(2)}});
  } else {
    write_manifest("benchmark", a);
  }
  std::cout << "wrote " << out_path.string() << "\n";
  return kExitOk;
}

int dispatch(const std::string& command, const CommonArgs& a, const json& extra);

int cmd_rerun(const std::string& manifest_path, const std::string& out_dir_override) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot open " + manifest_path);
  json m;
  in >> m;
  CommonArgs a;
  const json& c = m.at("config");
  a.task = c.at("task").get<std::string>();
  a.lambda = c.at("lambda").get<double>();
  a.rho = c.at("rho").get<double>();
  a.rho_auto = c.at("rho_auto").get<bool>();
  a.iters = c.at("iters").get<int>();
  a.early_stop = c.at("early_stop").get<bool>();
  a.averaged = c.at("averaged").get<bool>();
  a.monotone = c.at("monotone").get<bool>();
  a.k = c.at("k").get<int>();
  a.folds = c.at("folds").get<int>();
  a.grid = c.at("grid").get<std::string>();
  a.seed = c.at("seed").get<unsigned>();
  a.target_col = c.at("target_col").get<int>();
  a.no_header = c.at("no_header").get<bool>();
  a.input = m.at("input").get<std::string>();
  a.out_dir = out_dir_override.empty() ? m.at("out_dir").get<std::string>() : out_dir_override;
  return dispatch(m.at("command").get<std::string>(), a, m);
}

int dispatch(const std::string& command, const CommonArgs& a, const json& extra) {
  if (command == "fit") return cmd_fit(a);
  if (command == "predict") return cmd_predict(a, extra.at("model").get<std::string>());
  if (command == "tune") return cmd_tune(a);
  if (command == "synth")
    return cmd_synth(a, extra.at("n").get<int>(), extra.at("d").get<int>(),
                     extra.at("noise").get<double>());
  if (command == "benchmark") {
    std::vector<int> ns{250, 500, 1000}, ds{2, 8, 32};
    return cmd_benchmark(a, ns, ds, 50);
  }
  throw std::runtime_error("manifest: unknown command " + command);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cvxlearn: convex / DC regression and Bregman metric learning"};
  app.require_subcommand(1);

  CommonArgs a;
  auto add_common = [&](CLI::App* sub, bool with_input) {
    sub->add_option("--task", a.task, "convex | dc | bregman")->capture_default_str();
    sub->add_option("--lambda", a.lambda, "penalty weight")->capture_default_str();
    auto* rho_opt = sub->add_option("--rho", a.rho, "ADMM step parameter");
    auto* rho_auto_opt =
        sub->add_flag("--rho-auto", a.rho_auto, "use the default rho = sqrt(d) lambda^2 / n");
    rho_opt->excludes(rho_auto_opt);
    sub->add_option("--iters", a.iters, "max iterations")->capture_default_str();
    sub->add_flag("--early-stop", a.early_stop, "stop on stalled objective");
    sub->add_flag("--averaged", a.averaged, "return averaged iterates");
    sub->add_flag("--monotone", a.monotone, "monotone fit (project p- to zero)");
    sub->add_option("--k", a.k, "nearest-neighbor count")->capture_default_str();
    sub->add_option("--folds", a.folds, "cross-validation folds")->capture_default_str();
    sub->add_option("--grid", a.grid, "comma-separated lambda grid");
    sub->add_option("--seed", a.seed, "random seed")->capture_default_str();
    sub->add_option("--out-dir", a.out_dir, "output directory")->capture_default_str();
    if (with_input) {
      sub->add_option("input", a.input, "input CSV")->required();
      sub->add_option("--target-col", a.target_col, "target column index (default: last)");
      sub->add_flag("--no-header", a.no_header, "input CSV has no header row");
    }
  };

  auto* fit = app.add_subcommand("fit", "fit a model to a CSV dataset");
  add_common(fit, true);

  auto* predict = app.add_subcommand("predict", "predict with a saved model");
  std::string model_path;
  add_common(predict, true);
  predict->add_option("--model", model_path, "model JSON path")->required();

  auto* tune_cmd = app.add_subcommand("tune", "grid-search lambda with k-fold CV");
  add_common(tune_cmd, true);

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  int synth_n = 100, synth_d = 2;
  double synth_noise = 0.1;
  add_common(synth, false);
  synth->add_option("--n", synth_n, "points")->capture_default_str();
  synth->add_option("--d", synth_d, "dimensions")->capture_default_str();
  synth->add_option("--noise", synth_noise, "noise standard deviation")->capture_default_str();

  auto* bench = app.add_subcommand("benchmark", "time fits over an (n, d) grid");
  std::vector<int> bench_ns{250, 500, 1000}, bench_ds{2, 8, 32};
  int bench_iters = 50;
  add_common(bench, false);
  bench->add_option("--grid-n", bench_ns, "n values")->capture_default_str();
  bench->add_option("--grid-d", bench_ds, "d values")->capture_default_str();
  bench->add_option("--bench-iters", bench_iters, "iterations per cell")->capture_default_str();

  auto* rerun = app.add_subcommand("rerun", "re-run a command from its manifest");
  std::string rerun_manifest, rerun_out;
  rerun->add_option("--manifest", rerun_manifest, "manifest JSON path")->required();
  rerun->add_option("--out-dir", rerun_out, "override output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*fit) return cmd_fit(a);
    if (*predict) return cmd_predict(a, model_path);
    if (*tune_cmd) return cmd_tune(a);
    if (*synth) return cmd_synth(a, synth_n, synth_d, synth_noise);
    if (*bench) return cmd_benchmark(a, bench_ns, bench_ds, bench_iters);
    if (*rerun) return cmd_rerun(rerun_manifest, rerun_out);
  } catch (const DivergenceError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    if (msg.find("singular") != std::string::npos) {
      std::cerr << "numeric failure: " << msg << "\n";
      return kExitNumeric;
    }
    std::cerr << "error: " << msg << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
