#include "mixfit/model_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace mixfit {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void validate(const ModelFile& m) {
  if (m.format_version != 1)
    throw ModelFileError("model: unrecognized format_version " +
                         std::to_string(m.format_version));
  if (m.d < 1 || m.k < 1) throw ModelFileError("model: d and k must be >= 1");
  if (m.weights.size() != m.k || static_cast<int>(m.components.size()) != m.k)
    throw ModelFileError("model: component count mismatch");
  if ((m.weights.array() <= 0.0).any() || std::abs(m.weights.sum() - 1.0) > 1e-9)
    throw ModelFileError("model: weights must be positive and sum to 1");
  for (const auto& c : m.components) {
    if (c.mu.size() != m.d || c.sigma.rows() != m.d || c.sigma.cols() != m.d)
      throw ModelFileError("model: component shape mismatch");
    double scale = std::max(1.0, c.sigma.cwiseAbs().maxCoeff());
    if ((c.sigma - c.sigma.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
      throw ModelFileError("model: covariance is not symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(c.sigma);
    if (llt.info() != Eigen::Success)
      throw ModelFileError("model: covariance is not positive definite");
  }
}

}  // namespace

// Hand-rolled writer: fixed field order and %.17g doubles give canonical,
// byte-stable output. Parsing goes through nlohmann::json.
std::string model_to_json(const ModelFile& model) {
  std::ostringstream out;
  out << "{\n";
  out << "  \"format_version\": " << model.format_version << ",\n";
  out << "  \"d\": " << model.d << ",\n";
  out << "  \"k\": " << model.k << ",\n";
  out << "  \"weights\": [";
  for (Index j = 0; j < model.weights.size(); ++j) {
    if (j) out << ", ";
    out << fmt_double(model.weights(j));
  }
  out << "],\n";
  out << "  \"components\": [\n";
  for (int c = 0; c < model.k; ++c) {
    const GaussianParams& g = model.components[static_cast<std::size_t>(c)];
    out << "    {\"mu\": [";
    for (Index i = 0; i < g.mu.size(); ++i) {
      if (i) out << ", ";
      out << fmt_double(g.mu(i));
    }
    out << "], \"sigma\": [";
    for (Index i = 0; i < g.sigma.rows(); ++i) {
      if (i) out << ", ";
      out << "[";
      for (Index j = 0; j < g.sigma.cols(); ++j) {
        if (j) out << ", ";
        out << fmt_double(g.sigma(i, j));
      }
      out << "]";
    }
    out << "]}";
    out << (c + 1 < model.k ? ",\n" : "\n");
  }
  out << "  ],\n";
  out << "  \"metadata\": {\n";
  out << "    \"solver\": \"" << model.metadata.solver << "\",\n";
  out << "    \"seed\": " << model.metadata.seed << ",\n";
  out << "    \"final_ll\": " << fmt_double(model.metadata.final_ll) << ",\n";
  if (model.metadata.aic)
    out << "    \"aic\": " << fmt_double(*model.metadata.aic) << ",\n";
  if (model.metadata.bic)
    out << "    \"bic\": " << fmt_double(*model.metadata.bic) << ",\n";
  out << "    \"version\": \"" << model.metadata.version << "\"\n";
  out << "  }\n";
  out << "}\n";
  return out.str();
}

void save_model(const ModelFile& model, const std::string& path) {
  validate(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelFileError("model: cannot write '" + path + "'");
  out << model_to_json(model);
  if (!out) throw ModelFileError("model: write to '" + path + "' failed");
}

ModelFile load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelFileError("model: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ModelFileError(std::string("model: invalid JSON: ") + e.what());
  }

  ModelFile m;
  try {
    m.format_version = j.at("format_version").get<int>();
    m.d = j.at("d").get<Index>();
    m.k = j.at("k").get<int>();
    auto w = j.at("weights");
    m.weights.resize(static_cast<Index>(w.size()));
    for (std::size_t i = 0; i < w.size(); ++i)
      m.weights(static_cast<Index>(i)) = w[i].get<double>();
    for (const auto& comp : j.at("components")) {
      GaussianParams g;
      auto mu = comp.at("mu");
      g.mu.resize(static_cast<Index>(mu.size()));
      for (std::size_t i = 0; i < mu.size(); ++i)
        g.mu(static_cast<Index>(i)) = mu[i].get<double>();
      auto sigma = comp.at("sigma");
      g.sigma.resize(static_cast<Index>(sigma.size()),
                     static_cast<Index>(sigma.empty() ? 0 : sigma[0].size()));
      for (std::size_t r = 0; r < sigma.size(); ++r) {
        if (static_cast<Index>(sigma[r].size()) != g.sigma.cols())
          throw ModelFileError("model: ragged sigma rows");
        for (std::size_t c = 0; c < sigma[r].size(); ++c)
          g.sigma(static_cast<Index>(r), static_cast<Index>(c)) =
              sigma[r][c].get<double>();
      }
      m.components.push_back(std::move(g));
    }
    const auto& meta = j.at("metadata");
    m.metadata.solver = meta.at("solver").get<std::string>();
    m.metadata.seed = meta.at("seed").get<std::uint64_t>();
    m.metadata.final_ll = meta.at("final_ll").get<double>();
    if (meta.contains("aic")) m.metadata.aic = meta.at("aic").get<double>();
    if (meta.contains("bic")) m.metadata.bic = meta.at("bic").get<double>();
    m.metadata.version = meta.at("version").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ModelFileError(std::string("model: schema error: ") + e.what());
  }
  validate(m);
  return m;
}

ModelFile model_from_mixture(const MixtureSpec& spec, const MixtureParams& theta,
                             ModelMetadata metadata) {
  ModelFile m;
  m.d = spec.component.data_dim;
  m.k = spec.k;
  m.weights = theta.weights;
  m.components.reserve(theta.components.size());
  for (const auto& c : theta.components)
    m.components.push_back(point_to_gaussian(c));
  m.metadata = std::move(metadata);
  return m;
}

MixtureParams mixture_from_model(const ModelFile& model) {
  MixtureParams theta;
  theta.weights = model.weights;
  theta.components.reserve(model.components.size());
  for (const auto& c : model.components)
    theta.components.push_back(gaussian_to_point(c));
  return theta;
}

}  // namespace mixfit
