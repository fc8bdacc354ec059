// paircorr: simulate, analyze, fit and report.
//
// Every artifact carries the exact command line and the SHA-256 of each
// input, so a run directory can be audited without the shell history.

#include <openssl/opensslv.h>

#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "paircorr/paircorr.hpp"

namespace fs = std::filesystem;
using namespace paircorr;

namespace {

constexpr const char* kToolVersion = "1.0.0";

std::string g_command;  // exact command line, shell-quoted where needed

std::string quote_arg(const std::string& a) {
  if (!a.empty() && a.find_first_of(" \t\"'\\$`") == std::string::npos) return a;
  std::string out = "'";
  for (char c : a) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

std::string join_command(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) s += (i ? " " : "") + quote_arg(argv[i]);
  return s;
}

Json versions_json() {
  Json v;
  v["paircorr"] = kToolVersion;
  v["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  v["nlohmann_json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                       "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH);
  v["openssl"] = OPENSSL_VERSION_TEXT;
  return v;
}

/// Input path -> sha256, in argument order.
using InputHashes = std::vector<std::pair<std::string, std::string>>;

InputHashes hash_inputs(const std::vector<std::string>& paths) {
  InputHashes out;
  for (const auto& p : paths) out.emplace_back(p, sha256_file(p));
  return out;
}

HeaderLines provenance_lines(const InputHashes& inputs) {
  HeaderLines h{{"command", g_command}};
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    h.emplace_back("input" + std::to_string(i), inputs[i].first);
    h.emplace_back("input" + std::to_string(i) + "_sha256", inputs[i].second);
  }
  return h;
}

std::map<std::string, std::string> provenance_map(const InputHashes& inputs) {
  std::map<std::string, std::string> m;
  for (const auto& [k, v] : provenance_lines(inputs)) m[k] = v;
  return m;
}

Json provenance_json(const InputHashes& inputs) {
  Json j;
  j["command"] = g_command;
  Json in = Json::array();
  for (const auto& [p, h] : inputs) in.push_back({{"path", p}, {"sha256", h}});
  j["inputs"] = in;
  j["versions"] = versions_json();
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path);
  out << text;
  if (!out) throw Error("write failed: " + path);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

/// "a=1,b=2" (repeatable) -> {a: 1, b: 2}.
std::map<std::string, double> parse_assignments(const std::vector<std::string>& args, const std::string& flag) {
  std::map<std::string, double> out;
  for (const auto& arg : args) {
    for (const auto& item : split(arg, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos || eq == 0) throw InvalidArgument(flag + " expects name=value, got '" + item + "'");
      const std::string name = item.substr(0, eq), text = item.substr(eq + 1);
      std::size_t pos = 0;
      double v = 0.0;
      try {
        v = std::stod(text, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos == 0 || pos != text.size()) throw InvalidArgument(flag + ": '" + text + "' is not a number");
      out[name] = v;
    }
  }
  return out;
}

std::string fmt(double x, int digits = 6) {
  if (!std::isfinite(x)) return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
  std::ostringstream os;
  os << std::setprecision(digits) << x;
  return os.str();
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string config;
  std::string out;
  std::string format = "csv";
  std::optional<unsigned> workers;
};

int cmd_simulate(const SimulateArgs& a) {
  SimConfig cfg = read_sim_config(a.config);
  if (a.workers) cfg.workers = *a.workers;
  const auto inputs = hash_inputs({a.config});
  cfg.metadata["provenance.command"] = g_command;
  cfg.metadata["provenance.config_sha256"] = inputs[0].second;
  const auto t0 = std::chrono::steady_clock::now();
  const TrialSet ts = simulate(cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_tagfile(ts, a.out, a.format == "binary" ? TagFormat::Binary : TagFormat::Csv);

  std::array<std::uint64_t, 4> per_channel{};
  for (const auto& e : ts.events) ++per_channel[index_of(e.channel)];
  std::cout << "trials: " << ts.n_trials << "\n"
            << "trial_duration_ns: " << ts.trial_duration_ns << "\n"
            << "seed: " << cfg.seed << "\n"
            << "pair_rate: " << fmt(cfg.pair_rate) << "\n";
  for (auto ch : kAllChannels) std::cout << "events." << to_string(ch) << ": " << per_channel[index_of(ch)] << "\n";
  std::cout << "output: " << a.out << "\n"
            << "output_sha256: " << sha256_file(a.out) << "\n"
            << "simulate_seconds: " << fmt(secs, 3) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string tags;
  std::string out_dir = ".";
  std::string tau_max = "100us";
  std::string bin = "100";
  std::string window = "10us";
  std::vector<std::string> pairs;
  bool autos = false;
  bool gc2 = false;
  bool cs = false;
  double k_sigma = 3.0;
  std::string averaging = "probabilities-first";
  std::string trim_head = "0";
  std::string trim_tail = "0";
  std::string dead_time = "0";
  std::string simultaneity;
  unsigned workers = 1;
  bool timing = false;
};

std::vector<ChannelPair> parse_pairs(const std::vector<std::string>& args) {
  std::vector<ChannelPair> out;
  auto add = [&](ChannelPair p) {
    if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
  };
  for (const auto& arg : args) {
    for (const auto& tok : split(arg, ',')) {
      if (tok == "cross") {
        for (auto p : kCrossPairs) add(p);
        continue;
      }
      const auto a = tok.size() == 4 ? parse_channel(tok.substr(0, 2)) : std::nullopt;
      const auto b = tok.size() == 4 ? parse_channel(tok.substr(2, 2)) : std::nullopt;
      if (!a || !b || *a == *b) throw InvalidArgument("--pairs: '" + tok + "' is not a detector pair like 1a2b");
      // Stitched curves cover both orderings; store the canonical one.
      add(index_of(*a) < index_of(*b) ? ChannelPair{*a, *b} : ChannelPair{*b, *a});
    }
  }
  return out;
}

void tag_curve(CorrelationCurve& cv, const TrialSet& ts) {
  for (const auto& [k, v] : ts.metadata)
    if (k.rfind("provenance.", 0) != 0) cv.info["meta." + k] = v;
}

int cmd_analyze(const AnalyzeArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto pairs = parse_pairs(a.pairs);
  if (a.cs) {
    for (auto p : kCrossPairs)
      if (std::find(pairs.begin(), pairs.end(), p) == pairs.end())
        throw InvalidArgument("--cs needs all four cross pairs (1a2a, 1a2b, 1b2a, 1b2b) in --pairs; missing " +
                              p.label());
  }
  if (pairs.empty() && !a.autos && !a.gc2 && !a.cs)
    throw InvalidArgument("nothing to compute: give --pairs, --autos, --gc2 or --cs");
  EstimatorOptions est;
  if (a.averaging == "pointwise") est.averaging = Averaging::Pointwise;
  else if (a.averaging != "probabilities-first")
    throw InvalidArgument("--averaging must be 'probabilities-first' or 'pointwise'");

  const auto inputs = hash_inputs({a.tags});
  TrialSet ts = read_tagfile(a.tags);
  const Duration head = parse_duration(a.trim_head), tail = parse_duration(a.trim_tail);
  if (head.count() > 0 || tail.count() > 0) ts = trim_edges(ts, head, tail);
  const Duration dead = parse_duration(a.dead_time);
  if (dead.count() > 0) ts = dead_time_filter(ts, dead);

  BinConfig bin;
  bin.bin_ticks = parse_duration(a.bin).count();
  bin.tau_max_ticks = parse_duration(a.tau_max).count();
  bin.avg_window_ticks = parse_duration(a.window).count();
  bin.analysis_start_ticks = ts.window.start;
  bin.analysis_end_ticks = ts.window.end;
  if (bin.avg_window_ticks <= 0) throw InvalidArgument("--window must be positive");
  bin.check(ts.duration_ticks());

  CountRequest req;
  req.workers = std::max(1u, a.workers);
  auto want_both = [&](ChannelPair p) {
    for (auto q : {p, p.reversed()})
      if (std::find(req.pairs.begin(), req.pairs.end(), q) == req.pairs.end()) req.pairs.push_back(q);
  };
  for (auto p : pairs) want_both(p);
  if (a.autos || a.cs)
    for (auto p : kAutoPairs) want_both(p);
  if (a.gc2) {
    for (auto t : kConditionedTriples) {
      want_both({t.herald, t.first});
      want_both({t.herald, t.second});
      req.triples.push_back(t);
    }
    if (!a.simultaneity.empty()) req.simultaneity_ticks = parse_duration(a.simultaneity).count();
  }
  const CountTraces tr = count(ts, bin, req);

  fs::create_directories(a.out_dir);
  const auto header = provenance_lines(inputs);
  std::vector<std::string> written;
  auto emit = [&](CorrelationCurve cv, const std::string& name) {
    tag_curve(cv, ts);
    write_curve_csv(cv, (fs::path(a.out_dir) / name).string(), header);
    written.push_back(name);
  };

  std::map<std::string, CorrelationCurve> stitched;
  for (auto p : pairs) {
    stitched[p.label()] = g2_stitched(tr, p, est);
    emit(stitched[p.label()], "g2_" + p.label() + ".csv");
  }
  if (a.autos || a.cs) {
    for (auto p : kAutoPairs) {
      stitched[p.label()] = g2_stitched(tr, p, est);
      emit(stitched[p.label()], "g2_" + p.label() + ".csv");
    }
  }
  if (a.gc2)
    for (auto t : kConditionedTriples) emit(g2_conditioned(tr, t, est), "gc2_" + t.label() + ".csv");

  std::optional<CSReport> report;
  if (a.cs) {
    StandardCurves s;
    for (std::size_t i = 0; i < 4; ++i) s.cross[i] = stitched.at(kCrossPairs[i].label());
    for (std::size_t i = 0; i < 2; ++i) s.autos[i] = stitched.at(kAutoPairs[i].label());
    const auto rr = cauchy_schwarz_R1_R2(s);
    emit(rr.r1, "R1.csv");
    emit(rr.r2, "R2.csv");
    report = violation_report({rr.r1, rr.r2}, a.k_sigma);
    auto j = to_json(*report, provenance_map(inputs));
    j["g_1a1b_zero"] = {{"value", s.autos[0].g[s.autos[0].size() / 2]},
                        {"sigma", finite_or_null(s.autos[0].sigma[s.autos[0].size() / 2])}};
    j["g_2a2b_zero"] = {{"value", s.autos[1].g[s.autos[1].size() / 2]},
                        {"sigma", finite_or_null(s.autos[1].sigma[s.autos[1].size() / 2])}};
    write_json(j, (fs::path(a.out_dir) / "cs_report.json").string());
    written.push_back("cs_report.json");
  }

  Json m;
  m["provenance"] = provenance_json(inputs);
  m["parameters"] = {{"tau_max_ticks", bin.tau_max_ticks},
                     {"bin_ticks", bin.bin_ticks},
                     {"avg_window_ticks", bin.avg_window_ticks},
                     {"analysis_window_ticks", {bin.analysis_start_ticks, bin.analysis_end_ticks}},
                     {"averaging", a.averaging},
                     {"trim_head_ticks", head.count()},
                     {"trim_tail_ticks", tail.count()},
                     {"dead_time_ticks", dead.count()},
                     {"simultaneity_ticks", tr.simultaneity_ticks},
                     {"k_sigma", a.k_sigma},
                     {"workers", req.workers}};
  Json in_meta = Json::object();
  for (const auto& [k, v] : ts.metadata) in_meta[k] = v;
  m["input"] = {{"n_trials", ts.n_trials},
                {"trial_duration_ns", ts.trial_duration_ns},
                {"n_events", ts.events.size()},
                {"metadata", in_meta}};
  std::sort(written.begin(), written.end());
  m["outputs"] = written;
  write_json(m, (fs::path(a.out_dir) / "manifest.json").string());

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (a.timing) {
    // Kept out of the manifest so that the other outputs stay byte-identical.
    Json t = {{"provenance", provenance_json(inputs)},
              {"analyze_seconds", secs},
              {"n_events", ts.events.size()},
              {"events_per_second", secs > 0 ? static_cast<double>(ts.events.size()) / secs : 0.0}};
    write_json(t, (fs::path(a.out_dir) / "timing.json").string());
  }
  std::cout << "events: " << ts.events.size() << "\n"
            << "curves: " << written.size() << " files in " << a.out_dir << "\n";
  if (report)
    std::cout << "R_max: " << fmt(report->max.g) << " +- " << fmt(report->max.sigma) << " (" << report->max_label
              << " at " << fmt(report->max.tau_ns) << " ns), violated=" << (report->violated() ? "yes" : "no")
              << "\n";
  std::cerr << "analyze_seconds: " << fmt(secs, 3) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct FitArgs {
  std::vector<std::string> inputs;
  std::string model;
  std::vector<std::string> init;
  std::vector<std::string> fix;
  std::string out;
  std::optional<double> tau_max_ns;
  std::optional<int> multistart;
  double theta1_deg = constants::kTheta1Deg;
  bool free_b = false;
};

/// od,chi[,sigma] rows; '#' lines and a header line are skipped.
std::vector<ChiOdPoint> read_chi_od(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open chi-od table: " + path);
  std::vector<ChiOdPoint> pts;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto f = split(line, ',');
    if (n == 1 && !f.empty() && f[0] == "od") continue;
    if (f.size() < 2 || f.size() > 3) throw FormatError("expected od,chi[,sigma]", n);
    ChiOdPoint p;
    p.od = detail::parse_csv_real(f[0], n);
    p.chi = detail::parse_csv_real(f[1], n);
    if (f.size() == 3) p.sigma = detail::parse_csv_real(f[2], n);
    pts.push_back(p);
  }
  return pts;
}

Overrides pick(const Overrides& all, std::initializer_list<const char*> names) {
  Overrides out;
  for (const char* n : names) {
    if (auto it = all.init.find(n); it != all.init.end()) out.init[n] = it->second;
    if (auto it = all.fixed.find(n); it != all.fixed.end()) out.fixed[n] = it->second;
  }
  return out;
}

void check_known(const Overrides& ov, const std::vector<std::string>& names) {
  for (const auto* m : {&ov.init, &ov.fixed})
    for (const auto& [k, v] : *m)
      if (std::find(names.begin(), names.end(), k) == names.end()) {
        std::string known;
        for (const auto& n : names) known += (known.empty() ? "" : ", ") + n;
        throw InvalidArgument("unknown parameter '" + k + "' for this model (expected one of: " + known + ")");
      }
}

int cmd_fit(const FitArgs& a) {
  Overrides ov;
  ov.init = parse_assignments(a.init, "--init");
  ov.fixed = parse_assignments(a.fix, "--fix");
  const auto inputs = hash_inputs(a.inputs);
  const auto header = provenance_lines(inputs);
  const std::string json_path = a.out + ".json";
  Json j;
  std::vector<std::string> written;

  auto expect_curves = [&](std::size_t n) {
    if (a.inputs.size() != n)
      throw InvalidArgument("--model " + a.model + " takes " + std::to_string(n) + " curve file(s), got " +
                            std::to_string(a.inputs.size()));
  };
  auto overlay = [&](const CurveModel& model, const FitResult& r, const CorrelationCurve& like,
                     const std::string& suffix) {
    const std::string path = a.out + suffix;
    write_curve_csv(model_overlay(model, r, like, r.protocol + ":" + like.label), path, header);
    written.push_back(path);
  };

  if (a.model == "chi-od") {
    expect_curves(1);
    check_known(ov, {"a", "b"});
    if (ov.init.count("a") || ov.init.count("b") || ov.fixed.count("a"))
      throw InvalidArgument("chi-od is a closed-form line fit; only --fix b=<value> is accepted");
    const auto pts = read_chi_od(a.inputs[0]);
    const double b = ov.fixed.count("b") ? ov.fixed.at("b") : 1.0;
    const auto r = fit_chi_od(pts, !a.free_b, b);
    j = to_json(r);
    std::ostringstream csv;
    for (const auto& [k, v] : header) csv << "# " << k << "=" << v << "\n";
    csv << "od,chi,sigma,chi_fit\n";
    const ChiOdLaw law{r.value("a"), r.value("b")};
    for (const auto& p : pts)
      csv << detail::fmt_g17(p.od) << "," << detail::fmt_g17(p.chi) << "," << detail::fmt_g17(p.sigma) << ","
          << detail::fmt_g17(chi_of_od(p.od, law)) << "\n";
    write_text(a.out + "_overlay.csv", csv.str());
    written.push_back(a.out + "_overlay.csv");
  } else if (a.model == "doppler-global") {
    if (a.inputs.size() != 2)
      throw InvalidArgument("--model doppler-global needs two autocorrelation curves (g_1a1b and g_2a2b), got " +
                            std::to_string(a.inputs.size()));
    const auto g11 = read_curve_csv(a.inputs[0]);
    const auto g22 = read_curve_csv(a.inputs[1]);
    DopplerFitOptions o;
    o.overrides = ov;
    o.tau_max_ns = a.tau_max_ns;
    if (a.multistart) o.multistart = *a.multistart;
    const auto r = fit_doppler_global(g11, g22, o);
    j = to_json(r);
    // Per-curve overlays use the fitted angle and amplitude of each curve.
    const double T = r.value("T_uK") * 1e-6, th = r.value("theta1_deg");
    auto decay = [&](double theta, double amp) -> CurveModel {
      const double tau_c = doppler_time(o.wavelength, theta, T, o.mass);
      return [=](double tau_ns, std::span<const double>) { return doppler_decay(tau_ns * 1e-9, {amp, tau_c}); };
    };
    overlay(decay(th, r.value("A1")), r, g11, "_overlay1.csv");
    overlay(decay(180.0 - th, r.value("A2")), r, g22, "_overlay2.csv");
  } else if (a.model == "fast") {
    expect_curves(1);
    const auto cv = read_curve_csv(a.inputs[0]);
    FastFitOptions o;
    o.overrides = ov;
    if (a.tau_max_ns) o.tau_max_ns = *a.tau_max_ns;
    if (a.multistart) o.multistart = *a.multistart;
    const auto r = fit_fast(cv, o);
    j = to_json(r);
    overlay(fast_model(), r, cv, "_overlay.csv");
  } else if (a.model == "full") {
    expect_curves(1);
    check_known(ov, {"f", "chi", "delta_fit", "epsilon", "T_uK"});
    const auto cv = read_curve_csv(a.inputs[0]);
    FastFitOptions fo;
    fo.overrides = pick(ov, {"f", "chi", "delta_fit"});
    if (a.multistart) fo.multistart = *a.multistart;
    const auto fast = fit_fast(cv, fo);
    FullFitOptions o;
    o.theta1_deg = a.theta1_deg;
    o.overrides = pick(ov, {"epsilon", "T_uK"});
    o.tau_max_ns = a.tau_max_ns;
    if (a.multistart) o.multistart = *a.multistart;
    const auto r = fit_full(cv, fast, o);
    j = to_json(r);
    j["fast_stage"] = to_json(fast);
    overlay(full_model(a.theta1_deg), r, cv, "_overlay.csv");
  } else if (a.model == "theory") {
    expect_curves(1);
    const auto cv = read_curve_csv(a.inputs[0]);
    TheoryFitOptions o;
    o.overrides = ov;
    if (a.tau_max_ns) o.tau_max_ns = *a.tau_max_ns;
    if (a.multistart) o.multistart = *a.multistart;
    const auto r = fit_theory(cv, o);
    j = to_json(r);
    overlay(theory_model(), r, cv, "_overlay.csv");
  } else {
    throw InvalidArgument("--model must be one of theory, fast, full, doppler-global, chi-od");
  }

  j["provenance"] = provenance_json(inputs);
  if (auto p = fs::path(json_path).parent_path(); !p.empty()) fs::create_directories(p);
  write_json(j, json_path);
  written.push_back(json_path);
  std::cout << "protocol: " << j["protocol"].get<std::string>() << "\n";
  for (const auto& p : j["params"]) {
    std::cout << "  " << p["name"].get<std::string>() << " = "
              << (p["value"].is_null() ? "nan" : fmt(p["value"].get<double>())) << " +- "
              << (p["sigma"].is_null() ? "nan" : fmt(p["sigma"].get<double>()))
              << (p["fixed"].get<bool>() ? " (fixed)" : "") << "\n";
  }
  std::cout << "reduced_chi2: " << (j["reduced_chi2"].is_null() ? "nan" : fmt(j["reduced_chi2"].get<double>()))
            << ", converged=" << (j["converged"].get<bool>() ? "yes" : "no") << "\n";
  for (const auto& w : written) std::cout << "wrote " << w << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportArgs {
  std::string run_dir;
  std::vector<std::string> reference;
  std::string out;
};

// Later entries win: a simultaneous fit refines the staged one, etc.
int protocol_rank(const std::string& p) {
  static const std::vector<std::string> order = {"theory", "doppler-global", "fast", "staged", "simultaneous"};
  const auto it = std::find(order.begin(), order.end(), p);
  return it == order.end() ? -1 : static_cast<int>(it - order.begin());
}

int cmd_report(const ReportArgs& a) {
  const fs::path dir(a.run_dir);
  const std::vector<std::string> expected = {
      "manifest.json (from 'paircorr analyze')",
      "cs_report.json (from 'paircorr analyze --cs')",
      "one or more fit results <name>.json (from 'paircorr fit')",
  };
  auto missing_error = [&](const std::vector<std::string>& missing) {
    std::string msg = "run directory '" + a.run_dir + "' is missing required inputs:";
    for (const auto& m : missing) msg += "\n  - " + m;
    return Error(msg);
  };
  if (!fs::is_directory(dir)) throw missing_error(expected);

  std::vector<std::string> json_files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") json_files.push_back(e.path().filename().string());
  std::sort(json_files.begin(), json_files.end());

  const std::string out_name = a.out.empty() ? "report" : a.out;
  std::vector<std::string> fits;
  for (const auto& f : json_files) {
    if (f == "manifest.json" || f == "cs_report.json" || f == "timing.json" || f == out_name + ".json") continue;
    const auto j = read_json((dir / f).string());
    if (j.is_object() && j.contains("protocol") && j.contains("params")) fits.push_back(f);
  }
  std::vector<std::string> missing;
  if (!fs::exists(dir / "manifest.json")) missing.push_back(expected[0]);
  if (!fs::exists(dir / "cs_report.json")) missing.push_back(expected[1]);
  if (fits.empty()) missing.push_back(expected[2]);
  if (!missing.empty()) throw missing_error(missing);

  std::vector<std::string> input_names = {"manifest.json", "cs_report.json"};
  input_names.insert(input_names.end(), fits.begin(), fits.end());
  if (fs::exists(dir / "timing.json")) input_names.push_back("timing.json");
  std::vector<std::string> input_paths;
  for (const auto& n : input_names) input_paths.push_back((dir / n).string());
  const auto inputs = hash_inputs(input_paths);

  const auto manifest = read_json((dir / "manifest.json").string());
  const auto cs = read_json((dir / "cs_report.json").string());

  // Best available estimate of each physical parameter.
  struct Value {
    Json value, sigma;
    std::string source;
    int rank = -2;
  };
  std::map<std::string, Value> params;
  for (const auto& f : fits) {
    const auto j = read_json((dir / f).string());
    const int rank = protocol_rank(j["protocol"].get<std::string>());
    for (const auto& p : j["params"]) {
      auto& v = params[p["name"].get<std::string>()];
      if (rank > v.rank) v = {p["value"], p["sigma"], f, rank};
    }
  }

  Json r;
  r["provenance"] = provenance_json(inputs);
  r["R_max"] = cs["max"];
  r["violated"] = cs["violated"];
  r["k_sigma"] = cs["k_sigma"];
  Json intervals = Json::object();
  for (const auto& c : cs["curves"]) intervals[c["label"].get<std::string>()] = c["intervals"];
  r["violation_intervals"] = intervals;
  Json fitted = Json::object();
  for (const char* name : {"f", "chi", "delta_fit", "T_uK", "epsilon"}) {
    auto it = params.find(name);
    fitted[name] = it == params.end() ? Json{{"value", nullptr}, {"sigma", nullptr}, {"source", nullptr}}
                                      : Json{{"value", it->second.value}, {"sigma", it->second.sigma},
                                             {"source", it->second.source}};
  }
  r["fitted"] = fitted;
  r["fits"] = fits;
  r["analysis"] = {{"n_events", manifest["input"]["n_events"]},
                   {"n_trials", manifest["input"]["n_trials"]},
                   {"bin_ticks", manifest["parameters"]["bin_ticks"]},
                   {"tau_max_ticks", manifest["parameters"]["tau_max_ticks"]}};
  if (fs::exists(dir / "timing.json")) {
    const auto t = read_json((dir / "timing.json").string());
    r["timing"] = {{"analyze_seconds", t["analyze_seconds"]}, {"events_per_second", t["events_per_second"]}};
  }

  const auto ref = parse_assignments(a.reference, "--reference");
  Json deviations = Json::array();
  for (const auto& [name, want] : ref) {
    auto it = params.find(name);
    if (it == params.end() || it->second.value.is_null())
      throw InvalidArgument("--reference names '" + name + "', which no fit result in the run directory provides");
    const double v = it->second.value.get<double>();
    const double s = it->second.sigma.is_null() ? kNaN : it->second.sigma.get<double>();
    deviations.push_back({{"name", name},
                          {"value", v},
                          {"sigma", finite_or_null(s)},
                          {"reference", want},
                          {"deviation", v - want},
                          {"relative", finite_or_null(want != 0.0 ? (v - want) / want : kNaN)},
                          {"z", finite_or_null(s > 0.0 ? (v - want) / s : kNaN)}});
  }
  if (!ref.empty()) r["reference_comparison"] = deviations;

  auto num = [](const Json& x) { return x.is_null() ? std::string("n/a") : fmt(x.get<double>()); };
  std::ostringstream txt;
  txt << "# command=" << g_command << "\n";
  for (const auto& [p, h] : inputs) txt << "# input " << p << " sha256=" << h << "\n";
  txt << "\nCauchy-Schwarz\n";
  txt << "  R_max = " << num(cs["max"]["R"]) << " +- " << num(cs["max"]["sigma"]) << "  ("
      << cs["max"]["label"].get<std::string>() << " at tau = " << num(cs["max"]["tau_ns"]) << " ns)\n";
  txt << "  violated at " << num(cs["k_sigma"]) << " sigma: " << (cs["violated"].get<bool>() ? "yes" : "no") << "\n";
  // The full interval list stays in report.json; the text shows the first few.
  constexpr std::size_t kShownIntervals = 8;
  for (const auto& c : cs["curves"]) {
    const auto& ivs = c["intervals"];
    for (std::size_t i = 0; i < std::min(ivs.size(), kShownIntervals); ++i)
      txt << "  " << c["label"].get<std::string>() << " violates on [" << num(ivs[i]["tau_lo_ns"]) << ", "
          << num(ivs[i]["tau_hi_ns"]) << "] ns\n";
    if (ivs.size() > kShownIntervals)
      txt << "  " << c["label"].get<std::string>() << ": " << ivs.size() - kShownIntervals << " more intervals\n";
  }
  txt << "\nFitted parameters\n";
  for (const auto& [name, v] : fitted.items())
    txt << "  " << std::left << std::setw(10) << name << " = " << num(v["value"]) << " +- " << num(v["sigma"])
        << (v["source"].is_null() ? "" : "  [" + v["source"].get<std::string>() + "]") << "\n";
  if (!ref.empty()) {
    txt << "\nReference comparison\n  name       value        reference    deviation    z\n";
    for (const auto& d : deviations)
      txt << "  " << std::left << std::setw(10) << d["name"].get<std::string>() << " " << std::setw(12)
          << num(d["value"]) << " " << std::setw(12) << num(d["reference"]) << " " << std::setw(12)
          << num(d["deviation"]) << " " << num(d["z"]) << "\n";
  }
  txt << "\nAnalysis\n  events = " << num(r["analysis"]["n_events"]) << ", trials = " << num(r["analysis"]["n_trials"])
      << "\n";
  if (r.contains("timing"))
    txt << "  analyze time = " << num(r["timing"]["analyze_seconds"])
        << " s, throughput = " << num(r["timing"]["events_per_second"]) << " events/s\n";

  write_json(r, (dir / (out_name + ".json")).string());
  write_text((dir / (out_name + ".txt")).string(), txt.str());
  std::cout << txt.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  g_command = join_command(argc, argv);
  CLI::App app{"Photon-pair correlation analysis: simulate, analyze, fit, report"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Simulate a tag file from a config");
  s->add_option("config", sim.config, "Simulation config file")->required()->check(CLI::ExistingFile);
  s->add_option("-o,--out", sim.out, "Output tag file")->required();
  s->add_option("--format", sim.format, "Tag file format")->check(CLI::IsMember({"csv", "binary"}));
  s->add_option("--workers", sim.workers, "Worker threads (overrides the config)");

  AnalyzeArgs an;
  auto* z = app.add_subcommand("analyze", "Correlation curves and the Cauchy-Schwarz report");
  z->add_option("tags", an.tags, "Tag file")->required()->check(CLI::ExistingFile);
  z->add_option("--out-dir", an.out_dir, "Output directory");
  z->add_option("--tau-max", an.tau_max, "Largest delay (e.g. 100us; bare numbers are ticks)");
  z->add_option("--bin", an.bin, "Delay bin width (bare numbers are 0.1 ns ticks)");
  z->add_option("--window", an.window, "Coarse averaging window T");
  z->add_option("--pairs", an.pairs, "Detector pairs, e.g. 1a2b,1b2a or 'cross'");
  z->add_flag("--autos", an.autos, "Autocorrelations g_1a1b and g_2a2b");
  z->add_flag("--gc2", an.gc2, "Conditioned autocorrelations");
  z->add_flag("--cs", an.cs, "R1/R2 and the violation report (needs all cross pairs)");
  z->add_option("--k-sigma", an.k_sigma, "Violation significance");
  z->add_option("--averaging", an.averaging, "probabilities-first or pointwise");
  z->add_option("--trim-head", an.trim_head, "Drop events before this time in each trial");
  z->add_option("--trim-tail", an.trim_tail, "Drop events this close to the trial end");
  z->add_option("--dead-time", an.dead_time, "Per-detector dead-time veto");
  z->add_option("--simultaneity", an.simultaneity, "Triple coincidence half-width (default: one bin)");
  z->add_option("--workers", an.workers, "Worker threads");
  z->add_flag("--timing", an.timing, "Also write timing.json (not reproducible)");

  FitArgs fa;
  auto* f = app.add_subcommand("fit", "Fit a model to curve files");
  f->add_option("inputs", fa.inputs, "Curve CSV file(s), or an od,chi table for chi-od")
      ->required()
      ->check(CLI::ExistingFile);
  f->add_option("--model", fa.model, "theory, fast, full, doppler-global or chi-od")
      ->required()
      ->check(CLI::IsMember({"theory", "fast", "full", "doppler-global", "chi-od"}));
  f->add_option("--init", fa.init, "Starting values, name=value[,...]");
  f->add_option("--fix", fa.fix, "Fixed values, name=value[,...]");
  f->add_option("--out", fa.out, "Output prefix; writes <out>.json and overlay CSVs")->required();
  f->add_option("--tau-max-ns", fa.tau_max_ns, "Largest delay included in the fit, ns");
  f->add_option("--multistart", fa.multistart, "Number of randomized restarts");
  f->add_option("--theta1", fa.theta1_deg, "Grating angle of field 1 for the full model, degrees");
  f->add_flag("--free-b", fa.free_b, "chi-od: fit the intercept too");

  ReportArgs ra;
  auto* r = app.add_subcommand("report", "Summarize a run directory");
  r->add_option("run_dir", ra.run_dir, "Directory with analyze and fit outputs")->required();
  r->add_option("--reference", ra.reference, "Reference values, name=value[,...]");
  r->add_option("--out", ra.out, "Base name of the report files (default 'report')");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    if (*s) return cmd_simulate(sim);
    if (*z) return cmd_analyze(an);
    if (*f) return cmd_fit(fa);
    if (*r) return cmd_report(ra);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
