#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mixfit/gaussian.hpp"
#include "mixfit/mixture.hpp"

namespace mixfit {

struct ModelMetadata {
  std::string solver;
  std::uint64_t seed = 0;
  double final_ll = 0.0;  // unpenalized total log-likelihood on the fit data
  std::optional<double> aic;
  std::optional<double> bic;
  std::string version = kVersion;
};

// Persisted Gaussian mixture, JSON schema version 1. Numbers are written with
// 17 significant digits so doubles round-trip exactly; saving a loaded model
// reproduces the file byte for byte. No timestamps: identical fits produce
// identical files.
struct ModelFile {
  int format_version = 1;
  Index d = 0;
  int k = 0;
  Eigen::VectorXd weights;
  std::vector<GaussianParams> components;
  ModelMetadata metadata;
};

std::string model_to_json(const ModelFile& model);
void save_model(const ModelFile& model, const std::string& path);

// Parses and re-validates invariants (weights on the simplex, SPD
// covariances, recognized format_version). Throws ModelFileError.
ModelFile load_model(const std::string& path);

ModelFile model_from_mixture(const MixtureSpec& spec, const MixtureParams& theta,
                             ModelMetadata metadata);
MixtureParams mixture_from_model(const ModelFile& model);

}  // namespace mixfit
