#pragma once

#include <string>
#include <vector>

#include "mixfit/estimation.hpp"

namespace mixfit {

enum class CriterionKind { aic, bic, validation_ll };

struct CriterionValue {
  CriterionKind kind = CriterionKind::bic;
  double value = 0.0;
  Index num_params = 0;
  Index n = 0;
};

// aic = -2 ll + 2 k, bic = -2 ll + k ln n. Lower is better.
CriterionValue aic(double ll, Index num_params, Index n);
CriterionValue bic(double ll, Index num_params, Index n);

struct CsmOptions {
  int k_init = 1;
  int k_min = 1;
  int k_max = 10;
  CriterionKind criterion = CriterionKind::bic;
  int candidates_per_round = 3;
  FitOptions inner;
  int max_rounds = 30;
  double accept_slack = 1e-6;  // move accepted only when it improves by more
  bool merge_by_sym_kl = false;
};

struct CsmRound {
  int round = 0;
  std::string move;  // "split" or "merge"
  int comp_a = -1;
  int comp_b = -1;
  int k = 0;               // component count after the move
  double criterion = 0.0;  // criterion of the fully fitted candidate
  bool accepted = false;
};

struct CsmReport {
  FitReport fit;
  int k_selected = 0;
  CriterionValue best_criterion;
  std::vector<CsmRound> rounds;
};

// Competitive split-and-merge search over the number of components. Fits
// k_init fully, then each round screens the top split and merge candidates
// with short partial fits (inner max_iters/5), fully fits the best partial,
// and accepts the move only when the criterion strictly improves. Terminates
// when a round fails to improve or max_rounds is reached.
//
// For criterion validation_ll, inner.validation_fraction must be positive;
// candidate fits then run under early stopping and the criterion is the
// held-out log-likelihood (higher is better).
CsmReport csm_fit(const DistributionSpec& component, const DataBatch& data,
                  const CsmOptions& options);

}  // namespace mixfit
