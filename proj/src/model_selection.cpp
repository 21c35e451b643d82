#include "mixfit/model_selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mixfit {

namespace {

struct Fitted {
  MixtureParams theta;
  FitReport report;
  double criterion = 0.0;
  int k = 0;
};

bool improves(CriterionKind kind, double candidate, double incumbent, double slack) {
  if (kind == CriterionKind::validation_ll) return candidate > incumbent + slack;
  return candidate < incumbent - slack;
}

}  // namespace

CriterionValue aic(double ll, Index num_params, Index n) {
  if (n < 1) throw ConfigError("aic: n must be >= 1");
  return {CriterionKind::aic, -2.0 * ll + 2.0 * static_cast<double>(num_params),
          num_params, n};
}

CriterionValue bic(double ll, Index num_params, Index n) {
  if (n < 1) throw ConfigError("bic: n must be >= 1");
  return {CriterionKind::bic,
          -2.0 * ll + static_cast<double>(num_params) * std::log(static_cast<double>(n)),
          num_params, n};
}

CsmReport csm_fit(const DistributionSpec& component, const DataBatch& data,
                  const CsmOptions& options) {
  if (options.k_min < 1 || options.k_min > options.k_init ||
      options.k_init > options.k_max)
    throw ConfigError("csm: need 1 <= k_min <= k_init <= k_max");
  if (options.candidates_per_round < 1)
    throw ConfigError("csm: candidates_per_round must be >= 1");
  if (options.max_rounds < 0) throw ConfigError("csm: max_rounds must be >= 0");
  if (data.size() < 1) throw InsufficientDataError("csm: data is empty");

  const bool by_validation = options.criterion == CriterionKind::validation_ll;
  if (by_validation && !(options.inner.validation_fraction > 0.0))
    throw ConfigError("csm: validation_ll criterion needs validation_fraction > 0");

  // Criterion by validation holds out one split for the whole search; fits
  // then run plain on the train part so every candidate is scored on the
  // same held-out data.
  DataBatch fit_data = data;
  std::optional<DataBatch> holdout;
  FitOptions inner = options.inner;
  if (by_validation) {
    auto [train, val] =
        validation_split(data, inner.validation_fraction, inner.seed);
    fit_data = train;
    holdout = val;
    inner.validation_fraction = 0.0;
  }

  auto evaluate = [&](const MixtureSpec& spec, const MixtureParams& theta) {
    if (by_validation) return mix_ll(spec, theta, *holdout);
    double ll = mix_ll(spec, theta, fit_data);
    Index params = mix_num_free_params(spec);
    return options.criterion == CriterionKind::aic
               ? aic(ll, params, fit_data.size()).value
               : bic(ll, params, fit_data.size()).value;
  };

  auto run_fit = [&](int k, const std::optional<MixtureParams>& warm,
                     int iters) -> Fitted {
    MixtureSpec spec = MixtureSpec::make(component, k);
    FitOptions o = inner;
    o.max_iters = iters;
    FitReport r = fit(spec, fit_data, o, warm);
    Fitted f;
    f.k = k;
    f.theta = r.theta_hat;
    f.criterion = evaluate(spec, r.theta_hat);
    f.report = std::move(r);
    return f;
  };

  CsmReport out;
  Fitted current = run_fit(options.k_init, std::nullopt, inner.max_iters);
  out.fit = current.report;
  const int partial_iters = std::max(1, inner.max_iters / 5);

  for (int round = 1; round <= options.max_rounds; ++round) {
    MixtureSpec spec = MixtureSpec::make(component, current.k);

    struct Candidate {
      std::string move;
      int a = -1, b = -1;
      MixtureParams theta;
    };
    std::vector<Candidate> candidates;
    Rng surgery_rng(inner.seed + static_cast<std::uint64_t>(round));

    if (current.k < options.k_max) {
      auto splits = split_candidates(spec, current.theta, fit_data);
      int take = std::min<int>(options.candidates_per_round,
                               static_cast<int>(splits.size()));
      for (int i = 0; i < take; ++i) {
        int j = splits[static_cast<std::size_t>(i)].first;
        try {
          candidates.push_back(
              {"split", j, -1, split_component(spec, current.theta, j, surgery_rng)});
        } catch (const std::exception& e) {
          out.fit.events.push_back({round, "candidate_error", j, e.what()});
        }
      }
    }
    if (current.k > options.k_min) {
      auto merges =
          merge_candidates(spec, current.theta, fit_data, options.merge_by_sym_kl);
      int take = std::min<int>(options.candidates_per_round,
                               static_cast<int>(merges.size()));
      for (int i = 0; i < take; ++i) {
        const MergeCandidate& mc = merges[static_cast<std::size_t>(i)];
        try {
          candidates.push_back(
              {"merge", mc.i, mc.j, merge_components(spec, current.theta, mc.i, mc.j)});
        } catch (const std::exception& e) {
          out.fit.events.push_back({round, "candidate_error", mc.i, e.what()});
        }
      }
    }
    if (candidates.empty()) break;

    // Screen every candidate with a short partial fit; ties break toward the
    // lowest candidate index.
    int best_idx = -1;
    double best_partial = by_validation ? -std::numeric_limits<double>::infinity()
                                        : std::numeric_limits<double>::infinity();
    std::vector<Fitted> partials(candidates.size());
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      try {
        partials[c] = run_fit(candidates[c].theta.k(), candidates[c].theta,
                              partial_iters);
      } catch (const std::exception& e) {
        out.fit.events.push_back(
            {round, "candidate_error", candidates[c].a, e.what()});
        continue;
      }
      bool better = by_validation ? partials[c].criterion > best_partial
                                  : partials[c].criterion < best_partial;
      if (better) {
        best_partial = partials[c].criterion;
        best_idx = static_cast<int>(c);
      }
    }
    if (best_idx < 0) break;  // every candidate failed: no improvement

    const Candidate& chosen = candidates[static_cast<std::size_t>(best_idx)];
    Fitted full;
    try {
      full = run_fit(chosen.theta.k(),
                     partials[static_cast<std::size_t>(best_idx)].theta,
                     inner.max_iters);
    } catch (const std::exception& e) {
      out.fit.events.push_back({round, "candidate_error", chosen.a, e.what()});
      break;
    }

    CsmRound rec;
    rec.round = round;
    rec.move = chosen.move;
    rec.comp_a = chosen.a;
    rec.comp_b = chosen.b;
    rec.k = full.k;
    rec.criterion = full.criterion;
    rec.accepted =
        improves(options.criterion, full.criterion, current.criterion,
                 options.accept_slack);
    out.rounds.push_back(rec);
    out.fit.events.push_back({round, chosen.move, chosen.a,
                              (rec.accepted ? "accepted, K=" : "rejected, K=") +
                                  std::to_string(full.k)});
    if (!rec.accepted) break;
    current = std::move(full);
  }

  out.fit.theta_hat = current.theta;
  out.fit.converged = current.report.converged;
  out.fit.reason = current.report.reason;
  out.fit.iters = current.report.iters;
  out.fit.ll_trace = current.report.ll_trace;
  out.fit.val_trace = current.report.val_trace;
  for (const auto& e : current.report.events) out.fit.events.push_back(e);
  out.k_selected = current.k;

  MixtureSpec final_spec = MixtureSpec::make(component, current.k);
  double final_ll = mix_ll(final_spec, current.theta, fit_data);
  Index params = mix_num_free_params(final_spec);
  if (options.criterion == CriterionKind::aic)
    out.best_criterion = aic(final_ll, params, fit_data.size());
  else if (options.criterion == CriterionKind::bic)
    out.best_criterion = bic(final_ll, params, fit_data.size());
  else
    out.best_criterion = {CriterionKind::validation_ll, current.criterion, params,
                          holdout->size()};
  return out;
}

}  // namespace mixfit
