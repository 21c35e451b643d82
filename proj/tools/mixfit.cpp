// Command-line front end: fit mixtures to CSV data, sample from saved models,
// evaluate held-out likelihood, and search over the number of components.
// Exit codes: 0 success, 2 unreadable/incompatible data or model files,
// 3 estimation failure, 64 invalid flags.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mixfit/csv.hpp"
#include "mixfit/estimation.hpp"
#include "mixfit/gaussian.hpp"
#include "mixfit/model_io.hpp"
#include "mixfit/model_selection.hpp"
#include "mixfit/mixture.hpp"

namespace {

using namespace mixfit;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

const char* reason_name(StopReason r) {
  switch (r) {
    case StopReason::tol_ll: return "tol_ll";
    case StopReason::tol_grad: return "tol_grad";
    case StopReason::max_iters: return "max_iters";
    case StopReason::early_stop: return "early_stop";
  }
  return "unknown";
}

struct FitFlags {
  std::string solver = "em";
  int max_iters = 200;
  double tol_ll = 1e-8;
  double tol_grad = 1e-6;
  int lbfgs_memory = 10;
  int batch_size = 0;  // 0 = unset
  double step_constant = 0.0;
  double step_decay_c = 0.0;
  double step_decay_tau = 100.0;
  double validation_fraction = 0.0;
  int patience = 20;
  bool penalize = false;
  std::uint64_t seed = 0;
};

void add_fit_flags(CLI::App* cmd, FitFlags* f) {
  cmd->add_option("--solver", f->solver, "em|rsd|rcg|rlbfgs|sgd")
      ->check(CLI::IsMember({"em", "rsd", "rcg", "rlbfgs", "sgd"}));
  cmd->add_option("--max-iters", f->max_iters, "iteration (epoch) cap");
  cmd->add_option("--tol-ll", f->tol_ll, "relative objective-change tolerance");
  cmd->add_option("--tol-grad", f->tol_grad, "Riemannian gradient norm tolerance");
  cmd->add_option("--lbfgs-memory", f->lbfgs_memory, "LBFGS history length");
  cmd->add_option("--batch-size", f->batch_size, "mini-batch size (sgd)");
  cmd->add_option("--step-constant", f->step_constant, "constant step size");
  cmd->add_option("--step-decay-c", f->step_decay_c, "decay schedule c/(1+t/tau): c");
  cmd->add_option("--step-decay-tau", f->step_decay_tau, "decay schedule c/(1+t/tau): tau");
  cmd->add_option("--validation-fraction", f->validation_fraction,
                  "held-out fraction for early stopping");
  cmd->add_option("--patience", f->patience, "early-stopping patience");
  cmd->add_flag("--penalize", f->penalize, "MAP penalizer on");
  cmd->add_option("--seed", f->seed, "rng seed");
}

FitOptions to_options(const FitFlags& f) {
  FitOptions o;
  if (f.solver == "em") o.solver = Solver::em;
  else if (f.solver == "rsd") o.solver = Solver::rsd;
  else if (f.solver == "rcg") o.solver = Solver::rcg;
  else if (f.solver == "rlbfgs") o.solver = Solver::rlbfgs;
  else o.solver = Solver::sgd;
  o.max_iters = f.max_iters;
  o.tol_rel_ll = f.tol_ll;
  o.tol_grad = f.tol_grad;
  o.lbfgs_memory = f.lbfgs_memory;
  if (f.batch_size > 0) o.batch_size = f.batch_size;
  if (f.step_constant > 0.0 && f.step_decay_c > 0.0)
    throw ConfigError("flags: --step-constant and --step-decay-c are mutually exclusive");
  if (f.step_constant > 0.0)
    o.step_schedule = StepSchedule{StepSchedule::Kind::constant, f.step_constant, 0.0};
  else if (f.step_decay_c > 0.0)
    o.step_schedule =
        StepSchedule{StepSchedule::Kind::decay, f.step_decay_c, f.step_decay_tau};
  o.validation_fraction = f.validation_fraction;
  o.patience = f.patience;
  o.penalize = f.penalize;
  o.seed = f.seed;
  if (o.solver == Solver::sgd && !o.batch_size)
    throw ConfigError("flags: --solver sgd requires --batch-size");
  if (o.solver == Solver::sgd && !o.step_schedule)
    throw ConfigError("flags: --solver sgd requires --step-constant or --step-decay-c");
  return o;
}

void write_trace_csv(const std::string& path, const FitReport& report) {
  std::ofstream out(path);
  if (!out) throw CsvError("csv: cannot write '" + path + "'");
  out << "iter,ll,val_ll\n";
  for (std::size_t i = 0; i < report.ll_trace.size(); ++i) {
    out << (i + 1) << ',' << fmt(report.ll_trace[i]) << ',';
    out << (i < report.val_trace.size() ? fmt(report.val_trace[i]) : "nan");
    out << '\n';
  }
}

ModelMetadata make_metadata(const std::string& solver, std::uint64_t seed,
                            const MixtureSpec& spec, double final_ll, Index n) {
  ModelMetadata meta;
  meta.solver = solver;
  meta.seed = seed;
  meta.final_ll = final_ll;
  Index params = mix_num_free_params(spec);
  meta.aic = aic(final_ll, params, n).value;
  meta.bic = bic(final_ll, params, n).value;
  return meta;
}

int cmd_fit(const std::string& data_path, int k, const FitFlags& flags,
            std::optional<int> weights_column, const std::string& out_path,
            const std::string& trace_path) {
  if (k < 1) throw ConfigError("flags: --k must be >= 1");
  FitOptions options = to_options(flags);
  CsvData csv = load_data_csv(data_path, weights_column);
  DataBatch batch = csv.weights ? DataBatch(csv.data, *csv.weights)
                                : DataBatch(csv.data);

  MixtureSpec spec = MixtureSpec::make(gaussian_spec(batch.dim()), k);
  FitReport report = fit(spec, batch, options);

  double final_ll = mix_ll(spec, report.theta_hat, batch);
  ModelFile model = model_from_mixture(
      spec, report.theta_hat,
      make_metadata(flags.solver, flags.seed, spec, final_ll, batch.size()));
  save_model(model, out_path);
  if (!trace_path.empty()) write_trace_csv(trace_path, report);

  std::cout << "{\"final_ll\": " << fmt(final_ll) << ", \"per_datum_ll\": "
            << fmt(final_ll / static_cast<double>(batch.size()))
            << ", \"iters\": " << report.iters << ", \"reason\": \""
            << reason_name(report.reason) << "\", \"converged\": "
            << (report.converged ? "true" : "false") << ", \"k\": " << k
            << ", \"solver\": \"" << flags.solver << "\"}" << std::endl;
  return 0;
}

int cmd_sample(const std::string& model_path, Index n, std::uint64_t seed,
               const std::string& out_path, bool labels) {
  if (n < 1) throw ConfigError("flags: --n must be >= 1");
  ModelFile model = load_model(model_path);
  MixtureSpec spec = MixtureSpec::make(gaussian_spec(model.d), model.k);
  MixtureParams theta = mixture_from_model(model);
  Rng rng(seed);
  MixSample sample = mix_sample(spec, theta, n, rng);

  Eigen::MatrixXd rows(n, model.d + (labels ? 1 : 0));
  rows.leftCols(model.d) = sample.data.transpose();
  if (labels)
    for (Index i = 0; i < n; ++i)
      rows(i, model.d) = static_cast<double>(sample.labels[static_cast<std::size_t>(i)]);
  write_csv_matrix(out_path, rows);
  std::cout << "{\"n\": " << n << ", \"d\": " << model.d << ", \"labels\": "
            << (labels ? "true" : "false") << "}" << std::endl;
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_path,
             std::optional<int> weights_column, const std::string& per_datum_path) {
  ModelFile model = load_model(model_path);
  CsvData csv = load_data_csv(data_path, weights_column);
  if (csv.data.rows() != model.d)
    throw DimensionError("eval: data dimension " + std::to_string(csv.data.rows()) +
                         " does not match model dimension " + std::to_string(model.d));
  DataBatch batch = csv.weights ? DataBatch(csv.data, *csv.weights)
                                : DataBatch(csv.data);
  MixtureSpec spec = MixtureSpec::make(gaussian_spec(model.d), model.k);
  MixtureParams theta = mixture_from_model(model);

  Eigen::VectorXd llvec = mix_llvec(spec, theta, batch);
  double total = llvec.sum();
  Index params = mix_num_free_params(spec);
  if (!per_datum_path.empty()) write_csv_matrix(per_datum_path, llvec);

  std::cout << "{\"total_ll\": " << fmt(total) << ", \"mean_ll\": "
            << fmt(total / static_cast<double>(batch.size()))
            << ", \"aic\": " << fmt(aic(total, params, batch.size()).value)
            << ", \"bic\": " << fmt(bic(total, params, batch.size()).value)
            << ", \"n\": " << batch.size() << "}" << std::endl;
  return 0;
}

int cmd_select(const std::string& data_path, const FitFlags& flags,
               std::optional<int> weights_column, int k_init, int k_min, int k_max,
               const std::string& criterion, int candidates, int max_rounds,
               const std::string& out_path) {
  CsmOptions options;
  options.k_init = k_init;
  options.k_min = k_min;
  options.k_max = k_max;
  options.candidates_per_round = candidates;
  options.max_rounds = max_rounds;
  options.inner = to_options(flags);
  if (criterion == "aic") options.criterion = CriterionKind::aic;
  else if (criterion == "bic") options.criterion = CriterionKind::bic;
  else options.criterion = CriterionKind::validation_ll;

  CsvData csv = load_data_csv(data_path, weights_column);
  DataBatch batch = csv.weights ? DataBatch(csv.data, *csv.weights)
                                : DataBatch(csv.data);

  CsmReport report = csm_fit(gaussian_spec(batch.dim()), batch, options);

  for (const auto& round : report.rounds) {
    std::cout << "{\"round\": " << round.round << ", \"move\": \"" << round.move
              << "\", \"k\": " << round.k << ", \"criterion\": "
              << fmt(round.criterion) << ", \"accepted\": "
              << (round.accepted ? "true" : "false") << "}\n";
  }

  MixtureSpec spec = MixtureSpec::make(gaussian_spec(batch.dim()), report.k_selected);
  double final_ll = mix_ll(spec, report.fit.theta_hat, batch);
  ModelFile model = model_from_mixture(
      spec, report.fit.theta_hat,
      make_metadata(flags.solver, flags.seed, spec, final_ll, batch.size()));
  save_model(model, out_path);

  std::cout << "{\"k\": " << report.k_selected << ", \"criterion\": \"" << criterion
            << "\", \"value\": " << fmt(report.best_criterion.value)
            << ", \"final_ll\": " << fmt(final_ll) << "}" << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixfit: Gaussian mixture estimation on Riemannian parameter manifolds"};
  app.require_subcommand(1);

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "fit a mixture to CSV data");
  std::string fit_data, fit_out, fit_trace;
  int fit_k = 0;
  int fit_wcol = -1;
  FitFlags fit_flags;
  fit_cmd->add_option("data", fit_data, "input CSV, one row per datum")->required();
  fit_cmd->add_option("--k", fit_k, "number of components")->required();
  fit_cmd->add_option("--out", fit_out, "output model JSON")->required();
  fit_cmd->add_option("--trace", fit_trace, "per-iteration trace CSV");
  fit_cmd->add_option("--weights-column", fit_wcol, "0-based weights column");
  add_fit_flags(fit_cmd, &fit_flags);

  // sample
  auto* sample_cmd = app.add_subcommand("sample", "draw samples from a saved model");
  std::string sample_model, sample_out;
  Index sample_n = 0;
  std::uint64_t sample_seed = 0;
  bool sample_labels = false;
  sample_cmd->add_option("model", sample_model, "model JSON")->required();
  sample_cmd->add_option("--n", sample_n, "number of samples")->required();
  sample_cmd->add_option("--seed", sample_seed, "rng seed");
  sample_cmd->add_option("--out", sample_out, "output CSV")->required();
  sample_cmd->add_flag("--labels", sample_labels, "append component index column");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a model on CSV data");
  std::string eval_model, eval_data, eval_per_datum;
  int eval_wcol = -1;
  eval_cmd->add_option("model", eval_model, "model JSON")->required();
  eval_cmd->add_option("data", eval_data, "input CSV")->required();
  eval_cmd->add_option("--per-datum", eval_per_datum, "write per-datum ll CSV");
  eval_cmd->add_option("--weights-column", eval_wcol, "0-based weights column");

  // select
  auto* select_cmd = app.add_subcommand("select", "competitive split-and-merge search");
  std::string select_data, select_out, select_criterion = "bic";
  int select_k_init = 1, select_k_min = 1, select_k_max = 10;
  int select_candidates = 3, select_rounds = 30;
  int select_wcol = -1;
  FitFlags select_flags;
  select_cmd->add_option("data", select_data, "input CSV")->required();
  select_cmd->add_option("--out", select_out, "output model JSON")->required();
  select_cmd->add_option("--k-init", select_k_init, "starting component count");
  select_cmd->add_option("--k-min", select_k_min, "minimum component count");
  select_cmd->add_option("--k-max", select_k_max, "maximum component count");
  select_cmd->add_option("--criterion", select_criterion, "bic|aic|validation-ll")
      ->check(CLI::IsMember({"bic", "aic", "validation-ll"}));
  select_cmd->add_option("--candidates", select_candidates, "candidates per round");
  select_cmd->add_option("--max-rounds", select_rounds, "round cap");
  select_cmd->add_option("--weights-column", select_wcol, "0-based weights column");
  add_fit_flags(select_cmd, &select_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::cerr << "error: " << e.what() << std::endl;
    return 64;
  }

  try {
    if (app.got_subcommand(fit_cmd)) {
      std::optional<int> wcol = fit_wcol >= 0 ? std::optional<int>(fit_wcol) : std::nullopt;
      return cmd_fit(fit_data, fit_k, fit_flags, wcol, fit_out, fit_trace);
    }
    if (app.got_subcommand(sample_cmd))
      return cmd_sample(sample_model, sample_n, sample_seed, sample_out, sample_labels);
    if (app.got_subcommand(eval_cmd)) {
      std::optional<int> wcol =
          eval_wcol >= 0 ? std::optional<int>(eval_wcol) : std::nullopt;
      return cmd_eval(eval_model, eval_data, wcol, eval_per_datum);
    }
    if (app.got_subcommand(select_cmd)) {
      std::optional<int> wcol =
          select_wcol >= 0 ? std::optional<int>(select_wcol) : std::nullopt;
      return cmd_select(select_data, select_flags, wcol, select_k_init, select_k_min,
                        select_k_max,
                        select_criterion == "validation-ll" ? "validation_ll"
                                                            : select_criterion,
                        select_candidates, select_rounds, select_out);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 64;
  } catch (const CsvError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const ModelFileError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const InsufficientDataError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 3;
  }
  return 0;
}
