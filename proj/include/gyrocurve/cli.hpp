#pragma once

#include "gyrocurve/config.hpp"
#include "gyrocurve/verify.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <sstream>

namespace gyro::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kRuntime = 2, kVerifyFailure = 3 };

inline ScenarioConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError({path + ": cannot open file"});
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ParseError& ex) {
    throw ParseError(path + ": " + ex.what(), ex.line);
  } catch (const ValidationError& ex) {
    std::vector<std::string> e;
    for (const auto& m : ex.errors) e.push_back(path + ": " + m);
    throw ValidationError(e);
  }
}

inline std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> csv_header(const TrajectoryRecord& rec, int n) {
  std::vector<std::string> h{"t"};
  for (int i = 0; i < n; ++i) h.push_back("x" + std::to_string(i));
  for (int i = 0; i < n; ++i)
    for (int A = 0; A < n; ++A) h.push_back("e" + std::to_string(i) + std::to_string(A));
  h.push_back("fibre");
  for (int i = 0; i < n; ++i) h.push_back("v" + std::to_string(i));
  for (int i = 0; i < n; ++i)
    for (int A = 0; A < n; ++A) h.push_back("edot" + std::to_string(i) + std::to_string(A));
  for (int a = 0; a < n; ++a) h.push_back("K" + std::to_string(a + 1));
  h.push_back("energy");
  h.push_back("constraint_residual");
  for (const auto& o : rec.observable_names) h.push_back(o);
  return h;
}

inline void write_csv(const TrajectoryRecord& rec, int n, std::ostream& os) {
  auto h = csv_header(rec, n);
  for (std::size_t i = 0; i < h.size(); ++i) os << (i ? "," : "") << h[i];
  os << "\n";
  for (const auto& s : rec.samples) {
    std::vector<double> row{s.t};
    for (int i = 0; i < n; ++i) row.push_back(s.state.x(i));
    for (int i = 0; i < n; ++i)
      for (int A = 0; A < n; ++A) row.push_back(s.state.e(i, A));
    for (double v : row) os << fmt17(v) << ",";
    os << "velocity";
    row.clear();
    const auto& f = s.state.velocity();
    for (int i = 0; i < n; ++i) row.push_back(f.v(i));
    for (int i = 0; i < n; ++i)
      for (int A = 0; A < n; ++A) row.push_back(f.edot(i, A));
    for (int a = 0; a < n; ++a) row.push_back(s.invariants(a));
    row.push_back(s.energy);
    row.push_back(s.constraint_residual);
    for (double v : s.observables) row.push_back(v);
    for (double v : row) os << "," << fmt17(v);
    os << "\n";
  }
}

/// Deviation from a closed-form reference motion, when the scenario admits one.
inline std::optional<std::pair<std::string, double>> reference_deviation(const ScenarioConfig& c, const DynamicsModel& m,
                                                                         const BodyState& s0, const TrajectoryRecord& rec) {
  if (!c.torsion.empty() || c.damping_translational != 0 || c.damping_internal != 0 || c.potential != "none" ||
      c.integrator.constraint != "none")
    return std::nullopt;
  const auto& last = rec.samples.back();
  if (!c.curved2d()) {
    auto ref = flat_affine_reference(m.inertia, 0.0, s0.x, s0.velocity().v, s0.e, s0.velocity().edot, last.t);
    double d = std::max({(ref.x - last.state.x).cwiseAbs().maxCoeff(), (ref.e - last.state.e).cwiseAbs().maxCoeff(),
                         (ref.edot - last.state.velocity().edot).cwiseAbs().maxCoeff()});
    return std::make_pair(std::string("flat_closed_form_deviation"), d);
  }
  Mat V = internal_velocity(s0, m.space());
  if (V.cwiseAbs().maxCoeff() > 0) return std::nullopt;
  Space2D sp = c.manifold == "sphere" ? Space2D::Sphere : Space2D::Pseudosphere;
  Vec xr = geodesic_reference(sp, c.radius, s0.x, s0.velocity().v, last.t);
  return std::make_pair(std::string("geodesic_deviation"), surface_chord(sp, c.radius, xr, last.state.x));
}

inline SeparationConstants constants_from_row(const ActionRow& r) {
  SeparationConstants k;
  k.E = r.E;
  k.l = r.l;
  k.C_alpha = r.C_alpha;
  k.C_beta = r.C_beta;
  k.C_x = r.C_x;
  k.C_y = r.C_y;
  k.C = r.C;
  k.A = r.A;
  return k;
}

/// Separation constants of the configured initial state.
inline SeparationConstants constants_from_initial(const ScenarioConfig& c) {
  Scenario2D scn = build_scenario2d(c);
  DynamicsModel m = build_model(c);
  BodyState s = build_initial_state(c, m);
  SeparatedQuantities q = separated_quantities(scn, s, m.space(), m.inertia);
  SeparationConstants k;
  k.E = m.energy(s);
  k.l = q.p_phi;
  k.C_alpha = q.p_alpha;
  k.C_beta = q.p_beta;
  k.C_x = q.C_x;
  k.C_y = q.C_y;
  k.C = q.C_def;
  k.A = q.A_sep;
  return k;
}

/// Closed-form vs quadrature actions at the initial state's separation constants.
inline std::optional<double> action_oracle_deviation(const ScenarioConfig& c) {
  if (!c.curved2d() || (c.potential != "separable-xy" && c.potential != "separable-polar") || !c.torsion.empty())
    return std::nullopt;
  try {
    Scenario2D scn = build_scenario2d(c);
    SeparationConstants k = constants_from_initial(c);
    ActionSet q = action_variables_quadrature(scn, k), cf = closed_form_actions(scn, k);
    double rel = 0.0;
    for (auto [a, b] : {std::pair{cf.J_r, q.J_r}, {cf.J_x, q.J_x}, {cf.J_y, q.J_y}, {cf.J_eps, q.J_eps}, {cf.J_sigma, q.J_sigma}})
      if (a && b) rel = std::max(rel, std::abs(*a - *b) / std::max(1e-12, std::abs(*b)));
    return rel;
  } catch (const Error&) {
    return std::nullopt;
  }
}

struct SimulationOutput {
  TrajectoryRecord record;
  nlohmann::json summary;
};

inline std::string utc_timestamp() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Builds and integrates one scenario; the summary holds everything but the file names.
inline SimulationOutput simulate(const ScenarioConfig& c) {
  validate_semantics(c);
  const auto t0 = std::chrono::steady_clock::now();
  DynamicsModel m = build_model(c);
  BodyState s0 = build_initial_state(c, m);
  IntegratorConfig ic = build_integrator(c);
  auto obs = build_observables(c, m);
  SimulationOutput out;
  out.record = run(m, s0, ic, obs);
  const auto& rec = out.record;
  nlohmann::json j;
  j["scenario"] = c.name;
  j["manifold"] = c.manifold;
  j["method"] = c.integrator.method;
  j["dt"] = c.integrator.dt;
  j["steps"] = rec.steps;
  j["samples"] = rec.samples.size();
  j["t_final"] = rec.samples.back().t;
  std::vector<double> E;
  double cres = 0.0;
  for (const auto& s : rec.samples) {
    E.push_back(s.energy);
    cres = std::max(cres, s.constraint_residual);
  }
  j["energy_initial"] = E.front();
  j["energy_final"] = E.back();
  j["energy_drift"] = relative_drift(E, 1e-12);
  j["constraint"] = c.integrator.constraint;
  j["constraint_residual_max"] = cres;
  nlohmann::json drifts = nlohmann::json::object();
  for (const auto& n : rec.observable_names) drifts[n] = relative_drift(rec.series(n), 1e-12);
  j["observable_drifts"] = drifts;
  if (auto ref = reference_deviation(c, m, s0, rec)) j[ref->first] = ref->second;
  if (auto a = action_oracle_deviation(c)) j["action_oracle_deviation"] = *a;
  j["status"] = "ok";
  j["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  j["timestamp"] = utc_timestamp();
  out.summary = j;
  return out;
}

struct RunMessage {
  int code = kOk;
  std::string out, err;
};

/// Runs f over the configs with at most `threads` in flight; messages keep input order.
template <class F>
int for_each_config(const std::vector<std::string>& paths, int threads, std::ostream& out, std::ostream& err, F f) {
  std::vector<RunMessage> msgs(paths.size());
  auto task = [&](std::size_t i) {
    RunMessage& m = msgs[i];
    std::ostringstream o, e;
    try {
      ScenarioConfig c = load_config_file(paths[i]);
      m.code = f(c, o, e);
    } catch (const ParseError& ex) {
      e << "parse error: " << ex.what() << "\n";
      m.code = kValidation;
    } catch (const ValidationError& ex) {
      for (const auto& s : ex.errors) e << "validation error: " << s << "\n";
      m.code = kValidation;
    } catch (const StepFailure& ex) {
      e << paths[i] << ": step failure at t = " << ex.time << ": " << ex.what() << "\n";
      m.code = kRuntime;
    } catch (const std::exception& ex) {
      e << paths[i] << ": runtime error: " << ex.what() << "\n";
      m.code = kRuntime;
    }
    m.out = o.str();
    m.err = e.str();
  };
  const std::size_t width = static_cast<std::size_t>(std::max(1, threads));
  for (std::size_t start = 0; start < paths.size(); start += width) {
    std::vector<std::future<void>> fs;
    for (std::size_t i = start; i < std::min(paths.size(), start + width); ++i)
      fs.push_back(std::async(width > 1 ? std::launch::async : std::launch::deferred, task, i));
    for (auto& fu : fs) fu.get();
  }
  int code = kOk;
  for (const auto& m : msgs) {
    out << m.out;
    err << m.err;
    code = std::max(code, m.code);
  }
  return code;
}

struct SimulateOptions {
  std::vector<std::string> configs;
  std::string out_dir = ".";
  bool dry_run = false;
  int threads = 1;
};

inline int cmd_simulate(const SimulateOptions& o, std::ostream& out, std::ostream& err) {
  return for_each_config(o.configs, o.threads, out, err, [&](const ScenarioConfig& c, std::ostream& os, std::ostream&) {
    validate_semantics(c);
    if (o.dry_run) {
      os << render_config(c) << "\n";
      return int(kOk);
    }
    SimulationOutput r = simulate(c);
    namespace fs = std::filesystem;
    fs::create_directories(o.out_dir);
    const fs::path csv = fs::path(o.out_dir) / (c.output.csv.empty() ? c.name + ".csv" : c.output.csv);
    const fs::path sum = fs::path(o.out_dir) / (c.output.summary.empty() ? c.name + ".summary.json" : c.output.summary);
    {
      std::ofstream f(csv);
      if (!f) throw std::runtime_error("cannot write " + csv.string());
      write_csv(r.record, c.dim(), f);
    }
    r.summary["csv"] = csv.filename().string();
    {
      std::ofstream f(sum);
      if (!f) throw std::runtime_error("cannot write " + sum.string());
      f << r.summary.dump(2) << "\n";
    }
    os << c.name << ": " << r.record.steps << " steps, energy drift " << fmt17(r.summary["energy_drift"].get<double>())
       << ", wrote " << csv.string() << "\n";
    return int(kOk);
  });
}

inline nlohmann::json action_set_json(const ActionSet& a) {
  nlohmann::json j{{"J_phi", a.J_phi}, {"J_alpha", a.J_alpha}, {"J_beta", a.J_beta}};
  auto put = [&](const char* k, const std::optional<double>& v) {
    if (v) j[k] = *v;
  };
  put("J_r", a.J_r);
  put("J_x", a.J_x);
  put("J_y", a.J_y);
  put("J_eps", a.J_eps);
  put("J_sigma", a.J_sigma);
  return j;
}

inline int cmd_actions(const std::vector<std::string>& configs, int threads, std::ostream& out, std::ostream& err) {
  return for_each_config(configs, threads, out, err, [](const ScenarioConfig& c, std::ostream& os, std::ostream& es) {
    validate_semantics(c);
    if (!c.curved2d()) throw ValidationError({"manifold: actions need sphere or pseudosphere"});
    if (c.potential != "separable-xy" && c.potential != "separable-polar")
      throw ValidationError({"potential: actions need separable-xy or separable-polar"});
    Scenario2D scn = build_scenario2d(c);
    std::vector<SeparationConstants> rows;
    for (const auto& r : c.actions) rows.push_back(constants_from_row(r));
    if (rows.empty()) rows.push_back(constants_from_initial(c));
    nlohmann::json res = nlohmann::json::array();
    int code = kOk;
    for (const auto& k : rows) {
      nlohmann::json j{{"E", k.E}, {"l", k.l}, {"C_alpha", k.C_alpha}, {"C_beta", k.C_beta}};
      try {
        ActionSet q = action_variables_quadrature(scn, k);
        j["status"] = "ok";
        j["quadrature"] = action_set_json(q);
        try {
          ActionSet cf = closed_form_actions(scn, k);
          j["closed_form"] = action_set_json(cf);
          double rel = 0.0;
          auto cmp = [&](const std::optional<double>& a, const std::optional<double>& b) {
            if (a && b) rel = std::max(rel, std::abs(*a - *b) / std::max(1e-12, std::abs(*b)));
          };
          cmp(cf.J_r, q.J_r);
          cmp(cf.J_x, q.J_x);
          cmp(cf.J_y, q.J_y);
          cmp(cf.J_eps, q.J_eps);
          cmp(cf.J_sigma, q.J_sigma);
          j["max_relative_difference"] = rel;
          j["energy_from_actions"] = energy_from_actions(scn, cf);
        } catch (const RegimeError& ex) {
          j["closed_form_note"] = ex.what();
        }
      } catch (const UnboundMotionError& ex) {
        j["status"] = "unbound";
        j["warning"] = ex.what();
        es << "warning: " << c.name << ": unbound row: " << ex.what() << "\n";
      } catch (const RegimeError& ex) {
        j["status"] = "unbound";
        j["warning"] = ex.what();
        es << "warning: " << c.name << ": " << ex.what() << "\n";
      } catch (const std::exception& ex) {
        j["status"] = "error";
        j["error"] = ex.what();
        es << c.name << ": " << ex.what() << "\n";
        code = kRuntime;
      }
      res.push_back(j);
    }
    os << nlohmann::json{{"scenario", c.name}, {"rows", res}}.dump(2) << "\n";
    return code;
  });
}

struct VerifyOptions {
  std::vector<std::string> configs;
  std::uint64_t seed = 1;
  int samples = 0;  // 0: use the config value
  bool flip_curvature = false;
  int threads = 1;
};

/// Randomized invariant checks on the configured space.
inline std::vector<CheckResult> verify_checks(const ScenarioConfig& c, std::uint64_t seed, int samples, bool flip) {
  DynamicsModel m = build_model(c);
  const Manifold& M = m.space();
  StateSampler rs(seed);
  BracketOptions opt;
  if (flip || c.flip_curvature) opt.curvature_sign = -1.0;
  std::vector<CheckResult> out;
  out.push_back(check_brackets(M, samples, rs, opt));
  out.push_back(check_jacobi(M, samples, rs));
  out.push_back(check_legendre(M, m.inertia, samples, rs));
  if (c.curved2d()) {
    out.push_back(check_force_power(M, m.inertia, samples, rs));
  } else {
    CheckResult skip{"spin-curvature force power", 0.0, 0.0, 0, "skipped: flat space has no curvature"};
    out.push_back(skip);
  }
  TransformReport tr = check_transformations(M, samples, rs);
  out.push_back({"transformation laws", tr.max(), 1e-10, tr.cases, ""});
  DecompositionReport dr = check_decompositions(M.dim(), samples, rs);
  out.push_back({"polar and two-polar decompositions", dr.max(), 1e-12, dr.cases, ""});
  if (c.curved2d() && c.torsion.empty()) {
    try {
      out.push_back(check_bridge_hamiltonian(build_scenario2d(c), samples, rs));
    } catch (const SchemaError&) {
    }
  }
  return out;
}

inline int cmd_verify(const VerifyOptions& o, std::ostream& out, std::ostream& err) {
  return for_each_config(o.configs, o.threads, out, err, [&](const ScenarioConfig& c, std::ostream& os, std::ostream&) {
    validate_semantics(c);
    const int n = o.samples > 0 ? o.samples : c.verify_samples;
    int code = kOk;
    if ((o.flip_curvature || c.flip_curvature) && !c.curved2d())
      os << c.name << ": note: curvature sign flip has no effect on a flat space\n";
    for (const auto& r : verify_checks(c, o.seed, n, o.flip_curvature)) {
      if (!r.note.empty()) {
        os << c.name << ": SKIP " << r.name << " (" << r.note << ")\n";
        continue;
      }
      os << c.name << ": " << (r.passed() ? "PASS" : "FAIL") << " " << r.name << " residual " << std::setprecision(3)
         << r.residual << " tol " << r.tolerance << " cases " << r.cases << "\n";
      if (!r.passed()) code = kVerifyFailure;
    }
    return code;
  });
}

inline int cmd_list(const std::string& dir, std::ostream& out, std::ostream& err) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) {
    err << dir << ": not a directory\n";
    return kValidation;
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  int code = kOk;
  for (const auto& f : files) {
    try {
      ScenarioConfig c = load_config_file(f.string());
      out << std::left << std::setw(28) << c.name << " " << std::setw(13) << c.manifold << " " << c.description << "\n";
    } catch (const std::exception& ex) {
      err << ex.what() << "\n";
      code = kValidation;
    }
  }
  return code;
}

}  // namespace gyro::cli
