#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mixfit/csv.hpp"
#include "mixfit/gaussian.hpp"
#include "mixfit/model_io.hpp"
#include "oracles.hpp"

using namespace mixfit;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  static fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / "mixfit_io_tests";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

std::string cli_binary() {
  if (const char* env = std::getenv("MIXFIT_BIN")) return env;
  return "../tools/mixfit";  // ctest working directory fallback
}

// Runs the CLI, captures exit code and stderr.
struct RunResult {
  int code = -1;
  std::string err;
  std::string out;
};

RunResult run_cli(const std::string& args) {
  fs::path err = scratch_dir() / "stderr.txt";
  fs::path out = scratch_dir() / "stdout.txt";
  std::string cmd = cli_binary() + " " + args + " >" + out.string() + " 2>" +
                    err.string();
  int raw = std::system(cmd.c_str());
  RunResult r;
  r.code = WEXITSTATUS(raw);
  r.err = slurp(err);
  r.out = slurp(out);
  return r;
}

ModelFile sample_model() {
  ModelFile m;
  m.d = 2;
  m.k = 2;
  m.weights.resize(2);
  m.weights << 0.75, 0.25;
  Eigen::VectorXd mu1(2), mu2(2);
  mu1 << 0.1, -0.2;
  mu2 << 3.0, 4.0;
  Eigen::MatrixXd s1(2, 2), s2(2, 2);
  s1 << 1.0, 0.2, 0.2, 1.5;
  s2 << 2.0, -0.3, -0.3, 0.8;
  m.components.push_back({mu1, s1});
  m.components.push_back({mu2, s2});
  m.metadata.solver = "em";
  m.metadata.seed = 42;
  m.metadata.final_ll = -123.456789;
  m.metadata.aic = 270.0;
  m.metadata.bic = 280.0;
  return m;
}

}  // namespace

TEST_CASE("model json round trip is byte identical") {
  fs::path p1 = scratch_dir() / "m1.json";
  fs::path p2 = scratch_dir() / "m2.json";
  ModelFile m = sample_model();
  save_model(m, p1.string());
  ModelFile loaded = load_model(p1.string());
  save_model(loaded, p2.string());
  CHECK(slurp(p1) == slurp(p2));

  CHECK(loaded.metadata.final_ll == m.metadata.final_ll);
  CHECK((loaded.weights - m.weights).norm() == 0.0);
  CHECK((loaded.components[1].sigma - m.components[1].sigma).norm() == 0.0);

  MixtureParams theta = mixture_from_model(loaded);
  CHECK(theta.k() == 2);
  CHECK(point_to_gaussian(theta.components[0]).mu(0) == 0.1);
}

TEST_CASE("model validation on load") {
  fs::path p = scratch_dir() / "bad.json";

  ModelFile wrong_version = sample_model();
  save_model(wrong_version, p.string());
  std::string text = slurp(p);
  spit(p, text);  // baseline loads fine
  CHECK_NOTHROW(load_model(p.string()));

  std::string v2 = text;
  v2.replace(v2.find("\"format_version\": 1"), 19, "\"format_version\": 2");
  spit(p, v2);
  CHECK_THROWS_AS(load_model(p.string()), ModelFileError);

  std::string bad_weights = text;
  bad_weights.replace(bad_weights.find("0.75"), 4, "0.95");
  spit(p, bad_weights);
  CHECK_THROWS_AS(load_model(p.string()), ModelFileError);

  spit(p, "{ not json");
  CHECK_THROWS_AS(load_model(p.string()), ModelFileError);

  // non-SPD covariance
  ModelFile bad_sigma = sample_model();
  bad_sigma.components[0].sigma(0, 0) = -5.0;
  CHECK_THROWS_AS(save_model(bad_sigma, p.string()), ModelFileError);
}

TEST_CASE("csv round trip with 17 significant digits") {
  Rng rng(3);
  Eigen::MatrixXd rows(7, 3);
  for (Index i = 0; i < rows.size(); ++i)
    rows(i / 3, i % 3) = std::exp(40.0 * (rng.uniform() - 0.5)) *
                         (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.normal();
  rows(0, 0) = 1e-300;
  rows(1, 1) = -9.87654321098765432e250;
  rows(2, 2) = 0.1;
  fs::path p = scratch_dir() / "round.csv";
  write_csv_matrix(p.string(), rows);
  Eigen::MatrixXd back = read_csv_matrix(p.string());
  REQUIRE(back.rows() == rows.rows());
  REQUIRE(back.cols() == rows.cols());
  for (Index i = 0; i < rows.rows(); ++i)
    for (Index j = 0; j < rows.cols(); ++j) CHECK(back(i, j) == rows(i, j));
}

TEST_CASE("csv error reporting") {
  fs::path p = scratch_dir() / "bad.csv";
  spit(p, "1,2,3\n4,5\n");
  CHECK_THROWS_WITH_AS(read_csv_matrix(p.string()),
                       doctest::Contains("ragged row at line 2"), CsvError);
  spit(p, "1,2\n\n3,4\n");
  CHECK_THROWS_AS(read_csv_matrix(p.string()), CsvError);
  spit(p, "1,x\n");
  CHECK_THROWS_AS(read_csv_matrix(p.string()), CsvError);
  spit(p, "");
  CHECK_THROWS_AS(read_csv_matrix(p.string()), CsvError);
  CHECK_THROWS_AS(read_csv_matrix((scratch_dir() / "missing.csv").string()), CsvError);

  // CRLF and a trailing newline parse cleanly
  spit(p, "1,2\r\n3,4\r\n");
  Eigen::MatrixXd m = read_csv_matrix(p.string());
  CHECK(m(1, 1) == 4.0);
}

TEST_CASE("weights column extraction") {
  fs::path p = scratch_dir() / "w.csv";
  spit(p, "1,0.5,10\n2,0.25,20\n");
  CsvData csv = load_data_csv(p.string(), 1);
  REQUIRE(csv.weights.has_value());
  CHECK((*csv.weights)(0) == 0.5);
  CHECK(csv.data.rows() == 2);  // remaining columns become dimensions
  CHECK(csv.data(0, 1) == 2.0);
  CHECK(csv.data(1, 1) == 20.0);
  CHECK_THROWS_AS(load_data_csv(p.string(), 7), CsvError);
}

TEST_CASE("cli fit, eval, sample round trip") {
  fs::path dir = scratch_dir();
  fs::path data = dir / "data.csv";

  // our own sampler writes the training data
  auto spec = MixtureSpec::make(gaussian_spec(1), 2);
  Rng rng(97);
  Eigen::MatrixXd draws =
      mix_sample(spec, oracle::benchmark_model(), 500, rng).data;
  write_csv_matrix(data.string(), draws.transpose());

  fs::path model = dir / "model.json";
  fs::path trace = dir / "trace.csv";
  RunResult fit = run_cli("fit " + data.string() + " --k 2 --solver em --seed 7 --out " +
                          model.string() + " --trace " + trace.string());
  REQUIRE(fit.code == 0);
  CHECK(fit.err.empty());

  // deterministic: same command, byte-identical model
  fs::path model2 = dir / "model2.json";
  run_cli("fit " + data.string() + " --k 2 --solver em --seed 7 --out " +
          model2.string());
  CHECK(slurp(model) == slurp(model2));

  // eval reproduces the reported final ll
  RunResult eval = run_cli("eval " + model.string() + " " + data.string());
  REQUIRE(eval.code == 0);
  auto eval_json = nlohmann::json::parse(eval.out);
  ModelFile m = load_model(model.string());
  CHECK(std::abs(eval_json["total_ll"].get<double>() - m.metadata.final_ll) <= 1e-12);

  // the fitted weights land near the generating (0.8, 0.2)
  double p_low = m.components[0].mu(0) < m.components[1].mu(0) ? m.weights(0)
                                                               : m.weights(1);
  CHECK(std::abs(p_low - 0.8) < 0.1);

  // the trace file has the documented header
  std::string trace_text = slurp(trace);
  CHECK(trace_text.rfind("iter,ll,val_ll", 0) == 0);

  // sampling writes the requested number of rows, labels add a column
  fs::path samples = dir / "samples.csv";
  RunResult sample =
      run_cli("sample " + model.string() + " --n 100 --seed 3 --out " +
              samples.string() + " --labels");
  REQUIRE(sample.code == 0);
  Eigen::MatrixXd s = read_csv_matrix(samples.string());
  CHECK(s.rows() == 100);
  CHECK(s.cols() == 2);
  for (Index i = 0; i < s.rows(); ++i) {
    CHECK(s(i, 1) >= 0.0);
    CHECK(s(i, 1) <= 1.0);
  }

  // per-datum dump has one row per datum
  fs::path per = dir / "per.csv";
  RunResult eval2 =
      run_cli("eval " + model.string() + " " + data.string() + " --per-datum " +
              per.string());
  REQUIRE(eval2.code == 0);
  CHECK(read_csv_matrix(per.string()).rows() == 500);
}

TEST_CASE("cli exit codes") {
  fs::path dir = scratch_dir();
  fs::path ragged = dir / "ragged.csv";
  spit(ragged, "1,2\n3\n");
  fs::path out = dir / "o.json";

  RunResult r1 = run_cli("fit " + ragged.string() + " --k 2 --out " + out.string());
  CHECK(r1.code == 2);
  CHECK(r1.err.rfind("error:", 0) == 0);

  fs::path good = dir / "good.csv";
  spit(good, "0.1\n0.2\n0.4\n0.8\n1.6\n0.3\n");
  RunResult r2 = run_cli("fit " + good.string() + " --k 2 --solver sgd --out " +
                         out.string());
  CHECK(r2.code == 64);
  CHECK(r2.err.rfind("error:", 0) == 0);

  RunResult r3 = run_cli("select " + good.string() + " --k-min 2 --k-max 1 --out " +
                         out.string());
  CHECK(r3.code == 64);

  RunResult r4 = run_cli("fit " + good.string() + " --k 2 --out " + out.string() +
                         " --not-a-flag");
  CHECK(r4.code == 64);

  // dimension mismatch between model and data
  run_cli("fit " + good.string() + " --k 1 --out " + out.string());
  fs::path wide = dir / "wide.csv";
  spit(wide, "1,2\n3,4\n");
  RunResult r5 = run_cli("eval " + out.string() + " " + wide.string());
  CHECK(r5.code == 2);
  CHECK(r5.err.rfind("error:", 0) == 0);

  // invalid model file
  fs::path broken = dir / "broken.json";
  spit(broken, "{}");
  RunResult r6 = run_cli("sample " + broken.string() + " --n 5 --out " +
                         (dir / "s.csv").string());
  CHECK(r6.code == 2);

  // empty data file
  fs::path empty = dir / "empty.csv";
  spit(empty, "");
  RunResult r7 = run_cli("eval " + out.string() + " " + empty.string());
  CHECK(r7.code == 2);
}

TEST_CASE("cli eval mean ll matches negative entropy on a single Gaussian") {
  // E[ln f] = -H for draws from the model itself
  fs::path dir = scratch_dir();
  fs::path model = dir / "entropy_model.json";
  ModelFile m;
  m.d = 1;
  m.k = 1;
  m.weights = Eigen::VectorXd::Ones(1);
  Eigen::VectorXd mu(1);
  mu << 2.0;
  Eigen::MatrixXd sigma(1, 1);
  sigma << 2.25;
  m.components.push_back({mu, sigma});
  m.metadata.solver = "none";
  save_model(m, model.string());

  fs::path samples = dir / "entropy_samples.csv";
  RunResult sample = run_cli("sample " + model.string() + " --n 20000 --seed 5 --out " +
                             samples.string());
  REQUIRE(sample.code == 0);
  RunResult eval = run_cli("eval " + model.string() + " " + samples.string());
  REQUIRE(eval.code == 0);
  auto eval_json = nlohmann::json::parse(eval.out);
  double expected = -mvn_entropy({mu, sigma});
  CHECK(std::abs(eval_json["mean_ll"].get<double>() - expected) < 0.05);
}

TEST_CASE("cli select with zero rounds matches fit") {
  fs::path dir = scratch_dir();
  fs::path data = dir / "sel_data.csv";
  auto spec = MixtureSpec::make(gaussian_spec(1), 2);
  Rng rng(101);
  write_csv_matrix(data.string(),
                   mix_sample(spec, oracle::benchmark_model(), 300, rng).data.transpose());

  fs::path a = dir / "a.json";
  fs::path b = dir / "b.json";
  RunResult fit = run_cli("fit " + data.string() +
                          " --k 2 --solver em --seed 5 --max-iters 200 --out " +
                          a.string());
  REQUIRE(fit.code == 0);
  RunResult select = run_cli(
      "select " + data.string() +
      " --k-init 2 --max-rounds 0 --solver em --seed 5 --max-iters 200 --out " +
      b.string());
  REQUIRE(select.code == 0);
  ModelFile ma = load_model(a.string());
  ModelFile mb = load_model(b.string());
  CHECK((ma.weights - mb.weights).norm() == 0.0);
  CHECK((ma.components[0].mu - mb.components[0].mu).norm() == 0.0);
  CHECK((ma.components[1].sigma - mb.components[1].sigma).norm() == 0.0);
}
