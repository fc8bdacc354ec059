#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <string>

#include "paircorr/fitting.hpp"
#include "paircorr/inequalities.hpp"

namespace paircorr {

using Json = nlohmann::ordered_json;

/// JSON has no NaN/inf; non-finite numbers become null.
inline Json finite_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline Json to_json(const FitResult& r) {
  Json j;
  j["protocol"] = r.protocol;
  Json params = Json::array();
  for (const auto& p : r.params)
    params.push_back({{"name", p.name}, {"value", finite_or_null(p.value)}, {"sigma", finite_or_null(p.sigma)},
                      {"fixed", p.fixed}});
  j["params"] = params;
  Json fixed = Json::object();
  for (const auto& [k, v] : r.fixed_params()) fixed[k] = v;
  j["fixed_params"] = fixed;
  j["free_params"] = r.free_names;
  Json cov = Json::array();
  for (Eigen::Index a = 0; a < r.covariance.rows(); ++a) {
    Json row = Json::array();
    for (Eigen::Index b = 0; b < r.covariance.cols(); ++b) row.push_back(finite_or_null(r.covariance(a, b)));
    cov.push_back(row);
  }
  j["covariance"] = cov;
  j["chi2"] = finite_or_null(r.chi2);
  j["reduced_chi2"] = finite_or_null(r.reduced_chi2);
  j["n_points"] = r.n_points;
  j["n_free"] = r.n_free;
  j["n_iterations"] = r.n_iterations;
  j["converged"] = r.converged;
  j["degenerate"] = r.degenerate;
  j["multimodal"] = r.multimodal;
  j["condition_number"] = finite_or_null(r.condition_number);
  j["message"] = r.message;
  Json info = Json::object();
  for (const auto& [k, v] : r.info) info[k] = v;
  j["info"] = info;
  return j;
}

inline Json to_json(const CSReport& rep, const std::map<std::string, std::string>& provenance = {}) {
  Json j;
  j["threshold"] = rep.threshold;
  j["k_sigma"] = rep.k_sigma;
  j["violated"] = rep.violated();
  j["max"] = {{"label", rep.max_label},
              {"tau_ns", rep.max.tau_ns},
              {"R", finite_or_null(rep.max.g)},
              {"sigma", finite_or_null(rep.max.sigma)}};
  Json curves = Json::array();
  for (std::size_t c = 0; c < rep.curves.size(); ++c) {
    Json iv = Json::array();
    for (const auto& v : rep.intervals[c]) iv.push_back({{"tau_lo_ns", v.tau_lo_ns}, {"tau_hi_ns", v.tau_hi_ns}});
    const auto& m = rep.maxima[c];
    curves.push_back({{"label", rep.curves[c].label},
                      {"intervals", iv},
                      {"max", {{"tau_ns", m.tau_ns}, {"R", finite_or_null(m.g)}, {"sigma", finite_or_null(m.sigma)}}}});
  }
  j["curves"] = curves;
  Json prov = Json::object();
  for (const auto& [k, v] : provenance) prov[k] = v;
  j["provenance"] = prov;
  return j;
}

inline void write_json(const Json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw Error("write failed: " + path);
}

inline Json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open JSON file: " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed JSON in " + path + ": " + e.what());
  }
}

}  // namespace paircorr
