#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cvxlearn/csv.hpp"

using namespace cvxlearn;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("cvxlearn_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunResult run_cli(const std::string& args, const fs::path& dir) {
  fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  std::string cmd = std::string(CVXLEARN_CLI_PATH) + " " + args + " >" + out.string() + " 2>" +
                    err.string();
  int raw = std::system(cmd.c_str());
  int code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return {code, slurp(out), slurp(err)};
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
}

}  // namespace

TEST_CASE("ingest_csv: header, target selection, and quoting") {
  auto dir = scratch_dir("ingest");
  write_file(dir / "basic.csv", "a,b,target\n1,2,3\n4,5,6\n\"7\",8,9\n");
  auto data = ingest_csv<double>((dir / "basic.csv").string());
  CHECK(data.n() == 3);
  CHECK(data.d() == 2);
  CHECK(data.X(2, 0) == 7.0);
  CHECK(data.y(1) == 6.0);

  // Explicit non-terminal target column.
  auto data2 = ingest_csv<double>((dir / "basic.csv").string(), 0);
  CHECK(data2.y(0) == 1.0);
  CHECK(data2.X(0, 0) == 2.0);
  CHECK(data2.X(0, 1) == 3.0);

  // Headerless variant.
  write_file(dir / "nohdr.csv", "1,2\n3,4\n");
  auto data3 = ingest_csv<double>((dir / "nohdr.csv").string(), -1, false);
  CHECK(data3.n() == 2);
  CHECK(data3.y(1) == 4.0);
}

TEST_CASE("ingest_csv: malformed inputs cite line and column") {
  auto dir = scratch_dir("ingest_bad");
  write_file(dir / "bad_cell.csv", "a,b\n1,2\n3,abc\n");
  try {
    ingest_csv<double>((dir / "bad_cell.csv").string());
    FAIL("expected a parse error");
  } catch (const std::exception& e) {
    std::string msg = e.what();
    CHECK(msg.find("3") != std::string::npos);  // line
    CHECK(msg.find("2") != std::string::npos);  // column
    CHECK(msg.find("abc") != std::string::npos);
  }

  write_file(dir / "ragged.csv", "a,b\n1,2\n3\n");
  CHECK_THROWS(ingest_csv<double>((dir / "ragged.csv").string()));

  // Classification target must be integral.
  write_file(dir / "frac_label.csv", "x,label\n1,0\n2,0.5\n");
  CHECK_THROWS(ingest_csv<double>((dir / "frac_label.csv").string(), -1, true, true));
}

TEST_CASE("cli: synth is deterministic per seed") {
  auto d1 = scratch_dir("synth1");
  auto d2 = scratch_dir("synth2");
  auto r1 = run_cli("synth --task convex --n 20 --d 2 --seed 3 --out-dir " + d1.string(), d1);
  auto r2 = run_cli("synth --task convex --n 20 --d 2 --seed 3 --out-dir " + d2.string(), d2);
  REQUIRE(r1.code == 0);
  REQUIRE(r2.code == 0);
  CHECK(slurp(d1 / "data.csv") == slurp(d2 / "data.csv"));
  auto d3 = scratch_dir("synth3");
  auto r3 = run_cli("synth --task convex --n 20 --d 2 --seed 4 --out-dir " + d3.string(), d3);
  REQUIRE(r3.code == 0);
  CHECK(slurp(d1 / "data.csv") != slurp(d3 / "data.csv"));
}

TEST_CASE("cli: fit then predict reproduces training targets on clean data") {
  auto dir = scratch_dir("fitpredict");
  write_file(dir / "train.csv", "x,y\n-1,-1\n-0.5,-0.5\n0,0\n0.5,0.5\n1,1\n");
  auto fit = run_cli("fit " + (dir / "train.csv").string() +
                         " --task convex --lambda 0.001 --rho 0.01 --iters 3000 --out-dir " +
                         dir.string(),
                     dir);
  REQUIRE(fit.code == 0);
  CHECK(fs::exists(dir / "model.json"));
  CHECK(fs::exists(dir / "fit_report.csv"));
  CHECK(fs::exists(dir / "manifest.json"));

  write_file(dir / "query.csv", "x\n-1\n0\n1\n");
  auto pred = run_cli("predict " + (dir / "query.csv").string() + " --model " +
                          (dir / "model.json").string() + " --out-dir " + dir.string(),
                      dir);
  REQUIRE(pred.code == 0);
  std::ifstream in(dir / "predictions.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "prediction");
  std::vector<double> preds;
  while (std::getline(in, line)) preds.push_back(std::stod(line));
  REQUIRE(preds.size() == 3);
  CHECK(std::abs(preds[0] - (-1.0)) < 1e-2);
  CHECK(std::abs(preds[1] - 0.0) < 1e-2);
  CHECK(std::abs(preds[2] - 1.0) < 1e-2);
}

TEST_CASE("cli: predict rejects dimension mismatches with exit code 2") {
  auto dir = scratch_dir("dimmismatch");
  write_file(dir / "train.csv", "x,y\n-1,1\n0,0\n1,1\n");
  auto fit = run_cli("fit " + (dir / "train.csv").string() +
                         " --task convex --iters 100 --out-dir " + dir.string(),
                     dir);
  REQUIRE(fit.code == 0);
  write_file(dir / "query2d.csv", "a,b\n1,2\n");
  auto pred = run_cli("predict " + (dir / "query2d.csv").string() + " --model " +
                          (dir / "model.json").string() + " --out-dir " + dir.string(),
                      dir);
  CHECK(pred.code == 2);
  CHECK(pred.err.find("dimension") != std::string::npos);
}

TEST_CASE("cli: usage errors exit with code 2") {
  auto dir = scratch_dir("usage");
  write_file(dir / "train.csv", "x,y\n-1,1\n0,0\n1,1\n");
  // Conflicting rho flags.
  auto conflict = run_cli("fit " + (dir / "train.csv").string() +
                              " --rho 0.1 --rho-auto --out-dir " + dir.string(),
                          dir);
  CHECK(conflict.code == 2);
  // Unknown task.
  auto task = run_cli("fit " + (dir / "train.csv").string() + " --task concave --out-dir " +
                          dir.string(),
                      dir);
  CHECK(task.code == 2);
  // Missing subcommand.
  auto none = run_cli("", dir);
  CHECK(none.code == 2);
  // Missing input file.
  auto missing = run_cli("fit " + (dir / "nope.csv").string() + " --out-dir " + dir.string(),
                         dir);
  CHECK(missing.code == 2);
  // Malformed cell surfaces the ingest error.
  write_file(dir / "bad.csv", "x,y\n1,2\n3,abc\n");
  auto bad = run_cli("fit " + (dir / "bad.csv").string() + " --out-dir " + dir.string(), dir);
  CHECK(bad.code == 2);
  CHECK(bad.err.find("abc") != std::string::npos);
}

TEST_CASE("cli: rerun from a manifest reproduces the model byte-for-byte") {
  auto dir = scratch_dir("rerun");
  auto synth = run_cli("synth --task dc --n 25 --d 2 --seed 7 --out-dir " + dir.string(), dir);
  REQUIRE(synth.code == 0);
  auto first = scratch_dir("rerun_first");
  auto fit = run_cli("fit " + (dir / "data.csv").string() +
                         " --task dc --lambda 0.01 --rho 0.01 --iters 400 --out-dir " +
                         first.string(),
                     first);
  REQUIRE(fit.code == 0);
  auto second = scratch_dir("rerun_second");
  auto rr = run_cli("rerun --manifest " + (first / "manifest.json").string() + " --out-dir " +
                        second.string(),
                    second);
  REQUIRE(rr.code == 0);
  CHECK(slurp(first / "model.json") == slurp(second / "model.json"));
  CHECK(!slurp(second / "model.json").empty());
}

TEST_CASE("cli: bregman fit and label prediction round-trip") {
  auto dir = scratch_dir("bregman");
  auto synth = run_cli("synth --task bregman --n 20 --d 2 --seed 1 --out-dir " + dir.string(),
                       dir);
  REQUIRE(synth.code == 0);
  auto fit = run_cli("fit " + (dir / "data.csv").string() +
                         " --task bregman --lambda 0.1 --rho 0.01 --iters 500 --out-dir " +
                         dir.string(),
                     dir);
  REQUIRE(fit.code == 0);
  write_file(dir / "query.csv", "x0,x1\n1,0\n-1,0\n");
  auto pred = run_cli("predict " + (dir / "query.csv").string() + " --model " +
                          (dir / "model.json").string() + " --k 3 --out-dir " + dir.string(),
                      dir);
  REQUIRE(pred.code == 0);
  std::ifstream in(dir / "predictions.csv");
  std::string header, l1, l2;
  std::getline(in, header);
  std::getline(in, l1);
  std::getline(in, l2);
  CHECK(header == "label");
  CHECK(l1 != l2);  // the blob centers carry opposite labels
}
