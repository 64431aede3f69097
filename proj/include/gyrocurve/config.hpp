#pragma once

#include "gyrocurve/analytic2d.hpp"

#include <json.hpp>

#include <map>
#include <set>

namespace gyro {

struct ParseError : Error {
  int line = 0;
  ParseError(const std::string& what, int l) : Error(what), line(l) {}
};

/// Every validation problem found, each prefixed by its key path.
struct ValidationError : Error {
  std::vector<std::string> errors;
  explicit ValidationError(std::vector<std::string> e) : Error(join(e)), errors(std::move(e)) {}
  static std::string join(const std::vector<std::string>& e) {
    std::string s;
    for (const auto& x : e) s += (s.empty() ? "" : "; ") + x;
    return s;
  }
};

using Rows = std::vector<std::vector<double>>;

struct InertiaSpec {
  double m = 1.0;
  Rows J;  // n×n; a single 1×1 entry means J·1
  bool operator==(const InertiaSpec&) const = default;
};

struct TableSpec {
  int coordinate = 0;
  double start = 0.0, step = 1.0;
  std::vector<double> values;
  bool operator==(const TableSpec&) const = default;
};

struct TorsionComponent {
  int i = 0, j = 0, k = 1;
  double value = 0.0;
  bool operator==(const TorsionComponent&) const = default;
};

/// Initial data: (x, e, v, ė), (x, e, v, Ω̂) with V = eΩ̂, (x, e, p, P), or two-polar (q, q̇) or (q, p)
/// on curved 2D spaces.
struct InitialSpec {
  std::vector<double> x, v, p, q, qdot;
  Rows e, edot, P, omega_hat;
  bool operator==(const InitialSpec&) const = default;
};

struct IntegratorSpec {
  std::string method = "rk4";
  double dt = 1e-3;
  double t_end = 1.0;
  int stride = 1;
  std::string constraint = "none";
  double constraint_tol = 1e-6;
  bool retraction = true;
  bool operator==(const IntegratorSpec&) const = default;
};

struct OutputSpec {
  std::string csv, summary;
  bool operator==(const OutputSpec&) const = default;
};

struct ActionRow {
  double E = 0, l = 0, C_alpha = 0, C_beta = 0, C_x = 0, C_y = 0, C = 0, A = 0;
  bool operator==(const ActionRow&) const = default;
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::string description;
  std::string manifold = "flat2d";
  int dimension = 2;
  double radius = 1.0;
  std::string frame = "coordinate";
  InertiaSpec inertia;
  std::string potential = "none";
  double gamma = 0, A = 0, B = 0, C = 0, gamma_hat = 0, gamma_tilde = 0, coupling = 0;
  std::optional<double> F;
  std::optional<TableSpec> table;
  std::vector<TorsionComponent> torsion;
  double damping_translational = 0, damping_internal = 0;
  InitialSpec initial;
  IntegratorSpec integrator;
  OutputSpec output;
  std::vector<std::string> monitor;
  std::vector<ActionRow> actions;
  bool flip_curvature = false;
  int verify_samples = 20;
  bool operator==(const ScenarioConfig&) const = default;

  bool curved2d() const { return manifold == "sphere" || manifold == "pseudosphere"; }
  int dim() const { return curved2d() ? 2 : (manifold == "flat2d" ? 2 : dimension); }
};

// ---------------------------------------------------------------------------
// JSON <-> config.

namespace detail_cfg {

using nlohmann::json;

inline json rows_json(const Rows& r) { return json(r); }

struct Reader {
  std::vector<std::string>& errors;

  template <class T>
  void get(const json& j, const char* key, T& out, const std::string& path) {
    if (!j.contains(key)) return;
    try {
      out = j.at(key).get<T>();
    } catch (const std::exception&) {
      errors.push_back(path + key + ": wrong type");
    }
  }
  void unknown_keys(const json& j, const std::set<std::string>& known, const std::string& path) {
    for (auto it = j.begin(); it != j.end(); ++it)
      if (!known.count(it.key())) errors.push_back(path + it.key() + ": unknown key");
  }
};

}  // namespace detail_cfg

inline int line_of_offset(const std::string& text, std::size_t byte) {
  int line = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

/// Structural validation (keys, types, ranges, dimensions); collects every problem.
inline std::vector<std::string> validate_config(const ScenarioConfig& c) {
  std::vector<std::string> err;
  static const std::set<std::string> manifolds{"flat2d", "flatN", "sphere", "pseudosphere"};
  static const std::set<std::string> potentials{"none", "radial-det", "separable-xy", "separable-polar", "custom-table"};
  static const std::set<std::string> methods{"rk4", "implicit-midpoint"};
  static const std::set<std::string> constraints{"none", "gyroscopic", "incompressible", "rotationless"};
  static const std::set<std::string> frames{"coordinate", "polar-orthonormal"};
  if (!manifolds.count(c.manifold)) err.push_back("manifold: unknown manifold '" + c.manifold + "'");
  if (c.manifold == "flatN" && c.dimension < 1) err.push_back("dimension: must be at least 1");
  if (c.curved2d() && !(c.radius > 0)) err.push_back("radius: must be positive");
  if (!frames.count(c.frame)) err.push_back("frame: unknown frame '" + c.frame + "'");
  if (c.frame == "polar-orthonormal" && !c.curved2d()) err.push_back("frame: polar-orthonormal needs sphere or pseudosphere");
  const int n = c.dim();
  if (!(c.inertia.m > 0)) err.push_back("inertia.m: must be positive");
  {
    const auto& J = c.inertia.J;
    bool scalar = J.size() == 1 && J[0].size() == 1;
    if (J.empty()) {
      err.push_back("inertia.J: missing");
    } else if (!scalar && (static_cast<int>(J.size()) != n ||
                           std::any_of(J.begin(), J.end(), [n](const auto& r) { return static_cast<int>(r.size()) != n; }))) {
      err.push_back("inertia.J: must be " + std::to_string(n) + "x" + std::to_string(n) + " or a scalar");
    } else {
      Mat Jm = scalar ? Mat(J[0][0] * Mat::Identity(n, n)) : Mat(n, n);
      if (!scalar)
        for (int i = 0; i < n; ++i)
          for (int k = 0; k < n; ++k) Jm(i, k) = J[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
      try {
        Inertia(1.0, Jm).validate();
      } catch (const std::exception& ex) {
        err.push_back(std::string("inertia.J: ") + ex.what());
      }
    }
  }
  if (!potentials.count(c.potential)) err.push_back("potential: unknown potential family '" + c.potential + "'");
  if ((c.potential == "separable-xy" || c.potential == "separable-polar") && n != 2)
    err.push_back("potential: " + c.potential + " needs a two-dimensional space");
  if (c.F && (c.A != 0 || c.B != 0 || c.C != 0)) err.push_back("F: give either F or A/B/C, not both");
  if (c.F && !(*c.F > 0)) err.push_back("F: must be positive");
  if (c.potential == "custom-table") {
    if (!c.table) {
      err.push_back("table: required for custom-table");
    } else {
      if (c.table->values.size() < 4) err.push_back("table.values: need at least 4 samples");
      if (!(c.table->step > 0)) err.push_back("table.step: must be positive");
      if (c.table->coordinate < 0 || c.table->coordinate >= n) err.push_back("table.coordinate: out of range");
    }
  }
  for (std::size_t t = 0; t < c.torsion.size(); ++t) {
    const auto& s = c.torsion[t];
    auto bad = [n](int v) { return v < 0 || v >= n; };
    if (bad(s.i) || bad(s.j) || bad(s.k) || s.j == s.k)
      err.push_back("torsion[" + std::to_string(t) + "]: indices out of range or j == k");
  }
  if (c.damping_translational < 0 || c.damping_internal < 0) err.push_back("damping: coefficients must be nonnegative");
  // initial data
  const auto& I = c.initial;
  const bool two_polar = !I.q.empty();
  const bool mom = !I.p.empty() || !I.P.empty();
  auto sq = [n](const Rows& r) {
    return static_cast<int>(r.size()) == n &&
           std::all_of(r.begin(), r.end(), [n](const auto& row) { return static_cast<int>(row.size()) == n; });
  };
  if (two_polar) {
    if (!c.curved2d()) err.push_back("initial.q: two-polar coordinates need sphere or pseudosphere");
    const bool with_p = !I.p.empty();
    if (I.q.size() != 6 || (with_p ? I.p.size() : I.qdot.size()) != 6)
      err.push_back(with_p ? "initial.q/p: need 6 entries each" : "initial.q/qdot: need 6 entries each");
    else if (with_p && !I.qdot.empty())
      err.push_back("initial: give qdot or p, not both");
    else {
      const double r = I.q[0], x = I.q[4], y = I.q[5];
      if (!(r > 0) || (c.manifold == "sphere" && !(r < kPi * c.radius))) err.push_back("initial.q[0]: r at or beyond the chart pole");
      if (!(y > std::abs(x))) err.push_back("initial.q: deformation must satisfy y > |x|");
    }
  } else {
    if (static_cast<int>(I.x.size()) != n) err.push_back("initial.x: need " + std::to_string(n) + " entries");
    if (!I.e.empty() && !sq(I.e)) err.push_back("initial.e: must be " + std::to_string(n) + "x" + std::to_string(n));
    if (I.e.empty() && c.frame == "coordinate" && c.curved2d()) err.push_back("initial.e: required with the coordinate frame");
    if (mom) {
      if (static_cast<int>(I.p.size()) != n) err.push_back("initial.p: need " + std::to_string(n) + " entries");
      if (!sq(I.P)) err.push_back("initial.P: must be " + std::to_string(n) + "x" + std::to_string(n));
      if (!I.v.empty() || !I.edot.empty() || !I.omega_hat.empty())
        err.push_back("initial: give velocities or momenta, not both");
    } else {
      if (static_cast<int>(I.v.size()) != n) err.push_back("initial.v: need " + std::to_string(n) + " entries");
      if (!I.edot.empty() && !I.omega_hat.empty()) err.push_back("initial: give edot or omega_hat, not both");
      else if (!sq(I.omega_hat.empty() ? I.edot : I.omega_hat))
        err.push_back(std::string("initial.") + (I.omega_hat.empty() ? "edot" : "omega_hat") + ": must be " +
                      std::to_string(n) + "x" + std::to_string(n));
    }
    if (static_cast<int>(I.x.size()) == n && c.curved2d()) {
      const double r = I.x[0];
      if (!(r > 0) || (c.manifold == "sphere" && !(r < kPi * c.radius)))
        err.push_back("initial.x[0]: r at or beyond the chart pole");
    }
  }
  // integrator
  const auto& G = c.integrator;
  if (!methods.count(G.method)) err.push_back("integrator.method: unknown method '" + G.method + "'");
  if (!(G.dt > 0)) err.push_back("integrator.dt: must be positive");
  if (!(G.t_end > 0)) err.push_back("integrator.t_end: must be positive");
  if (G.stride < 1) err.push_back("integrator.stride: must be at least 1");
  if (!constraints.count(G.constraint)) err.push_back("integrator.constraint: unknown constraint '" + G.constraint + "'");
  if (!(G.constraint_tol > 0)) err.push_back("integrator.constraint_tol: must be positive");
  if (c.verify_samples < 1) err.push_back("verify_samples: must be at least 1");
  if (!c.actions.empty() && !c.curved2d()) err.push_back("actions: need sphere or pseudosphere");
  return err;
}

inline ScenarioConfig config_from_json(const nlohmann::json& j) {
  using nlohmann::json;
  std::vector<std::string> err;
  detail_cfg::Reader rd{err};
  ScenarioConfig c;
  if (!j.is_object()) throw ValidationError({"<root>: expected an object"});
  rd.unknown_keys(j,
                  {"name", "description", "manifold", "dimension", "radius", "frame", "inertia", "potential", "gamma",
                   "A", "B", "C", "F", "gamma_hat", "gamma_tilde", "coupling", "table", "torsion", "damping", "initial",
                   "integrator", "output", "monitor", "actions", "debug", "verify_samples"},
                  "");
  rd.get(j, "name", c.name, "");
  rd.get(j, "description", c.description, "");
  rd.get(j, "manifold", c.manifold, "");
  rd.get(j, "dimension", c.dimension, "");
  rd.get(j, "radius", c.radius, "");
  rd.get(j, "frame", c.frame, "");
  rd.get(j, "potential", c.potential, "");
  for (auto [k, p] : std::initializer_list<std::pair<const char*, double*>>{{"gamma", &c.gamma},
                                                                            {"A", &c.A},
                                                                            {"B", &c.B},
                                                                            {"C", &c.C},
                                                                            {"gamma_hat", &c.gamma_hat},
                                                                            {"gamma_tilde", &c.gamma_tilde},
                                                                            {"coupling", &c.coupling}})
    rd.get(j, k, *p, "");
  if (j.contains("F")) {
    double F = 0;
    rd.get(j, "F", F, "");
    c.F = F;
  }
  rd.get(j, "verify_samples", c.verify_samples, "");
  if (j.contains("inertia")) {
    const json& in = j["inertia"];
    if (!in.is_object()) {
      err.push_back("inertia: expected an object");
    } else {
      rd.unknown_keys(in, {"m", "J"}, "inertia.");
      rd.get(in, "m", c.inertia.m, "inertia.");
      if (in.contains("J")) {
        if (in["J"].is_number())
          c.inertia.J = {{in["J"].get<double>()}};
        else
          rd.get(in, "J", c.inertia.J, "inertia.");
      }
    }
  }
  if (j.contains("table")) {
    const json& t = j["table"];
    TableSpec ts;
    rd.unknown_keys(t, {"coordinate", "start", "step", "values"}, "table.");
    rd.get(t, "coordinate", ts.coordinate, "table.");
    rd.get(t, "start", ts.start, "table.");
    rd.get(t, "step", ts.step, "table.");
    rd.get(t, "values", ts.values, "table.");
    c.table = ts;
  }
  if (j.contains("torsion")) {
    if (!j["torsion"].is_array()) {
      err.push_back("torsion: expected a list");
    } else {
      for (std::size_t i = 0; i < j["torsion"].size(); ++i) {
        const json& t = j["torsion"][i];
        TorsionComponent tc;
        const std::string path = "torsion[" + std::to_string(i) + "].";
        rd.unknown_keys(t, {"i", "j", "k", "value"}, path);
        rd.get(t, "i", tc.i, path);
        rd.get(t, "j", tc.j, path);
        rd.get(t, "k", tc.k, path);
        rd.get(t, "value", tc.value, path);
        c.torsion.push_back(tc);
      }
    }
  }
  if (j.contains("damping")) {
    const json& d = j["damping"];
    rd.unknown_keys(d, {"translational", "internal"}, "damping.");
    rd.get(d, "translational", c.damping_translational, "damping.");
    rd.get(d, "internal", c.damping_internal, "damping.");
  }
  if (j.contains("initial")) {
    const json& in = j["initial"];
    rd.unknown_keys(in, {"x", "e", "v", "edot", "omega_hat", "p", "P", "q", "qdot"}, "initial.");
    auto& I = c.initial;
    rd.get(in, "x", I.x, "initial.");
    rd.get(in, "e", I.e, "initial.");
    rd.get(in, "v", I.v, "initial.");
    rd.get(in, "edot", I.edot, "initial.");
    rd.get(in, "omega_hat", I.omega_hat, "initial.");
    rd.get(in, "p", I.p, "initial.");
    rd.get(in, "P", I.P, "initial.");
    rd.get(in, "q", I.q, "initial.");
    rd.get(in, "qdot", I.qdot, "initial.");
  } else {
    err.push_back("initial: missing");
  }
  if (j.contains("integrator")) {
    const json& g = j["integrator"];
    rd.unknown_keys(g, {"method", "dt", "t_end", "stride", "constraint", "constraint_tol", "retraction"}, "integrator.");
    auto& G = c.integrator;
    rd.get(g, "method", G.method, "integrator.");
    rd.get(g, "dt", G.dt, "integrator.");
    rd.get(g, "t_end", G.t_end, "integrator.");
    rd.get(g, "stride", G.stride, "integrator.");
    rd.get(g, "constraint", G.constraint, "integrator.");
    rd.get(g, "constraint_tol", G.constraint_tol, "integrator.");
    rd.get(g, "retraction", G.retraction, "integrator.");
  }
  if (j.contains("output")) {
    const json& o = j["output"];
    rd.unknown_keys(o, {"csv", "summary"}, "output.");
    rd.get(o, "csv", c.output.csv, "output.");
    rd.get(o, "summary", c.output.summary, "output.");
  }
  rd.get(j, "monitor", c.monitor, "");
  if (j.contains("actions")) {
    const json& a = j["actions"];
    if (!a.is_array()) {
      err.push_back("actions: expected a list of rows");
    } else {
      for (std::size_t i = 0; i < a.size(); ++i) {
        ActionRow r;
        const std::string path = "actions[" + std::to_string(i) + "].";
        rd.unknown_keys(a[i], {"E", "l", "C_alpha", "C_beta", "C_x", "C_y", "C", "A"}, path);
        rd.get(a[i], "E", r.E, path);
        rd.get(a[i], "l", r.l, path);
        rd.get(a[i], "C_alpha", r.C_alpha, path);
        rd.get(a[i], "C_beta", r.C_beta, path);
        rd.get(a[i], "C_x", r.C_x, path);
        rd.get(a[i], "C_y", r.C_y, path);
        rd.get(a[i], "C", r.C, path);
        rd.get(a[i], "A", r.A, path);
        c.actions.push_back(r);
      }
    }
  }
  if (j.contains("debug")) {
    rd.unknown_keys(j["debug"], {"flip_curvature"}, "debug.");
    rd.get(j["debug"], "flip_curvature", c.flip_curvature, "debug.");
  }
  for (auto& e : validate_config(c)) err.push_back(e);
  if (!err.empty()) throw ValidationError(err);
  return c;
}

/// Parses one JSON scenario document.
inline ScenarioConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& ex) {
    const int line = line_of_offset(text, ex.byte == 0 ? 0 : ex.byte - 1);
    throw ParseError("line " + std::to_string(line) + ": " + ex.what(), line);
  }
  return config_from_json(j);
}

/// Renders a config as JSON; parse_config(render_config(c)) == c.
inline nlohmann::json render_json(const ScenarioConfig& c) {
  using nlohmann::json;
  json j;
  j["name"] = c.name;
  if (!c.description.empty()) j["description"] = c.description;
  j["manifold"] = c.manifold;
  j["dimension"] = c.dimension;
  j["radius"] = c.radius;
  j["frame"] = c.frame;
  j["inertia"] = {{"m", c.inertia.m}, {"J", c.inertia.J}};
  j["potential"] = c.potential;
  j["gamma"] = c.gamma;
  j["A"] = c.A;
  j["B"] = c.B;
  j["C"] = c.C;
  if (c.F) j["F"] = *c.F;
  j["gamma_hat"] = c.gamma_hat;
  j["gamma_tilde"] = c.gamma_tilde;
  j["coupling"] = c.coupling;
  if (c.table)
    j["table"] = {{"coordinate", c.table->coordinate},
                  {"start", c.table->start},
                  {"step", c.table->step},
                  {"values", c.table->values}};
  if (!c.torsion.empty()) {
    j["torsion"] = json::array();
    for (const auto& t : c.torsion) j["torsion"].push_back({{"i", t.i}, {"j", t.j}, {"k", t.k}, {"value", t.value}});
  }
  j["damping"] = {{"translational", c.damping_translational}, {"internal", c.damping_internal}};
  json in = json::object();
  const auto& I = c.initial;
  if (!I.x.empty()) in["x"] = I.x;
  if (!I.e.empty()) in["e"] = I.e;
  if (!I.v.empty()) in["v"] = I.v;
  if (!I.edot.empty()) in["edot"] = I.edot;
  if (!I.omega_hat.empty()) in["omega_hat"] = I.omega_hat;
  if (!I.p.empty()) in["p"] = I.p;
  if (!I.P.empty()) in["P"] = I.P;
  if (!I.q.empty()) in["q"] = I.q;
  if (!I.qdot.empty()) in["qdot"] = I.qdot;
  j["initial"] = in;
  const auto& G = c.integrator;
  j["integrator"] = {{"method", G.method},         {"dt", G.dt},
                     {"t_end", G.t_end},           {"stride", G.stride},
                     {"constraint", G.constraint}, {"constraint_tol", G.constraint_tol},
                     {"retraction", G.retraction}};
  json out = json::object();
  if (!c.output.csv.empty()) out["csv"] = c.output.csv;
  if (!c.output.summary.empty()) out["summary"] = c.output.summary;
  j["output"] = out;
  j["monitor"] = c.monitor;
  if (!c.actions.empty()) {
    j["actions"] = json::array();
    for (const auto& r : c.actions)
      j["actions"].push_back({{"E", r.E},
                              {"l", r.l},
                              {"C_alpha", r.C_alpha},
                              {"C_beta", r.C_beta},
                              {"C_x", r.C_x},
                              {"C_y", r.C_y},
                              {"C", r.C},
                              {"A", r.A}});
  }
  if (c.flip_curvature) j["debug"] = {{"flip_curvature", true}};
  j["verify_samples"] = c.verify_samples;
  return j;
}

inline std::string render_config(const ScenarioConfig& c) { return render_json(c).dump(2); }

// ---------------------------------------------------------------------------
// Builders.

inline Mat rows_to_mat(const Rows& r) {
  const int n = static_cast<int>(r.size());
  Mat m(n, n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) m(i, k) = r[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  return m;
}
inline Vec to_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

inline Inertia build_inertia(const ScenarioConfig& c) {
  const int n = c.dim();
  const auto& J = c.inertia.J;
  Mat Jm = (J.size() == 1 && J[0].size() == 1) ? Mat(J[0][0] * Mat::Identity(n, n)) : rows_to_mat(J);
  return Inertia(c.inertia.m, Jm);
}

inline ManifoldPtr build_manifold(const ScenarioConfig& c) {
  ManifoldPtr base;
  if (c.manifold == "sphere")
    base = std::make_shared<Sphere2>(c.radius);
  else if (c.manifold == "pseudosphere")
    base = std::make_shared<Pseudosphere2>(c.radius);
  else
    base = std::make_shared<FlatSpace>(c.dim());
  if (c.torsion.empty()) return base;
  const int n = c.dim();
  Tensor3 S(n);
  for (const auto& t : c.torsion) {
    S(t.i, t.j, t.k) += t.value;
    S(t.i, t.k, t.j) -= t.value;
  }
  return std::make_shared<RiemannCartan>(base, [S](const Vec&) { return S; });
}

inline bool is_harmonic_config(const ScenarioConfig& c) { return c.F.has_value(); }

/// 2D scenario for sphere/pseudosphere configs.
inline Scenario2D build_scenario2d(const ScenarioConfig& c) {
  if (!c.curved2d()) throw SchemaError("two-dimensional analytic model needs sphere or pseudosphere");
  Scenario2D s;
  s.space = c.manifold == "sphere" ? Space2D::Sphere : Space2D::Pseudosphere;
  s.R = c.radius;
  s.m = c.inertia.m;
  Inertia I = build_inertia(c);
  if ((I.J - I.J(0, 0) * Mat::Identity(2, 2)).cwiseAbs().maxCoeff() > 0)
    throw SchemaError("two-dimensional analytic model needs isotropic J");
  s.J = I.J(0, 0);
  Potential2D p;
  p.gamma = (c.potential == "radial-det" || c.potential == "separable-xy" || c.potential == "separable-polar") ? c.gamma : 0.0;
  p.coupling = c.coupling;
  if (c.potential == "separable-xy") {
    if (c.F)
      p = [&] {
        Potential2D h = Potential2D::harmonic(*c.F, c.gamma);
        h.coupling = c.coupling;
        return h;
      }();
    else {
      p.family = DeformationFamily::SeparableXY;
      p.A = c.A;
      p.B = c.B;
      p.C = c.C;
    }
  } else if (c.potential == "separable-polar") {
    p.family = DeformationFamily::SeparablePolar;
    p.gamma_tilde = c.gamma_tilde;
    p.gamma_hat = c.gamma_hat;
  }
  s.potential = p;
  return s;
}

inline DynamicsModel build_model(const ScenarioConfig& c) {
  DynamicsModel m;
  m.manifold = build_manifold(c);
  m.inertia = build_inertia(c);
  std::vector<PotentialPtr> parts;
  const double A = c.F ? 0.0 : c.A, B = c.F ? *c.F : c.B, C = c.F ? *c.F / 4 : c.C;
  if (c.potential == "radial-det" || c.potential == "separable-xy" || c.potential == "separable-polar") {
    if (c.gamma != 0.0) {
      double f = c.gamma;
      if (c.manifold == "sphere") f = c.gamma * c.radius * c.radius;
      parts.push_back(std::make_shared<RadialDetPotential>(f));
    }
  }
  if (c.potential == "separable-xy") parts.push_back(deformation_xy_potential(A, B, C, c.coupling));
  if (c.potential == "separable-polar") parts.push_back(deformation_polar_potential(c.gamma_tilde, c.gamma_hat, c.coupling));
  if (c.potential == "custom-table")
    parts.push_back(std::make_shared<TabulatedPotential>(c.table->coordinate, c.table->start, c.table->step, c.table->values));
  if (!parts.empty()) m.potential = std::make_shared<SumPotential>(parts);
  m.damping_translational = c.damping_translational;
  m.damping_internal = c.damping_internal;
  return m;
}

inline FrameFieldPtr build_frame(const ScenarioConfig& c) {
  if (c.frame == "polar-orthonormal") return std::make_shared<PolarOrthonormalFrame>(c.radius, c.manifold == "pseudosphere");
  return std::make_shared<CoordinateFrame>(c.dim());
}

/// Initial velocity state (momenta are mapped through the inverse Legendre transform).
inline BodyState build_initial_state(const ScenarioConfig& c, const DynamicsModel& m) {
  const auto& I = c.initial;
  if (!I.q.empty()) {
    Scenario2D scn = build_scenario2d(c);
    if (!I.p.empty()) return inverse_legendre(bridge_momentum_state(scn, to_vec(I.q), to_vec(I.p)), m.inertia, m.space());
    return bridge_velocity_state(scn, to_vec(I.q), to_vec(I.qdot));
  }
  Vec x = to_vec(I.x);
  m.space().require_domain(x);
  Mat e = I.e.empty() ? build_frame(c)->frame(x) : rows_to_mat(I.e);
  invert_frame(e);
  if (!I.p.empty()) return inverse_legendre(BodyState::with_momentum(x, e, to_vec(I.p), rows_to_mat(I.P)), m.inertia, m.space());
  Vec v = to_vec(I.v);
  if (!I.omega_hat.empty()) {
    Mat V = e * rows_to_mat(I.omega_hat);
    return BodyState::with_velocity(x, e, v, V - connection_matrix(m.space().connection(x), v) * e);
  }
  return BodyState::with_velocity(x, e, v, rows_to_mat(I.edot));
}

inline ConstraintKind constraint_kind(const std::string& s) {
  if (s == "gyroscopic") return ConstraintKind::Gyroscopic;
  if (s == "incompressible") return ConstraintKind::Incompressible;
  if (s == "rotationless") return ConstraintKind::Rotationless;
  return ConstraintKind::None;
}

inline IntegratorConfig build_integrator(const ScenarioConfig& c) {
  IntegratorConfig g;
  g.method = c.integrator.method == "implicit-midpoint" ? IntegrationMethod::ImplicitMidpoint : IntegrationMethod::RK4;
  g.dt = c.integrator.dt;
  g.t_end = c.integrator.t_end;
  g.stride = c.integrator.stride;
  g.constraint = constraint_kind(c.integrator.constraint);
  g.constraint_tol = c.integrator.constraint_tol;
  g.retraction = c.integrator.retraction;
  return g;
}

/// Monitored observables: built-ins first, then the 2D separated quantities.
inline std::vector<MonitoredObservable> build_observables(const ScenarioConfig& c, const DynamicsModel& m) {
  std::vector<MonitoredObservable> out;
  std::set<std::string> seen;
  for (const auto& name : c.monitor) {
    if (!seen.insert(name).second) continue;
    try {
      out.push_back(builtin_observable(name, m));
    } catch (const UnknownObservableError&) {
      if (!c.curved2d()) throw;
      out.push_back(bridge_observable(name, build_scenario2d(c)));
    }
  }
  return out;
}

/// Semantic checks needing the built models (observable names, initial domain, constraint consistency).
inline void validate_semantics(const ScenarioConfig& c) {
  std::vector<std::string> err;
  try {
    DynamicsModel m = build_model(c);
    try {
      build_observables(c, m);
    } catch (const std::exception& ex) {
      err.push_back(std::string("monitor: ") + ex.what());
    }
    try {
      BodyState s = build_initial_state(c, m);
      if (constraint_kind(c.integrator.constraint) == ConstraintKind::Gyroscopic) {
        double r = constraint_residual(ConstraintKind::Gyroscopic, s.e, m.space().metric(s.x));
        if (r > c.integrator.constraint_tol) err.push_back("initial.e: not g-orthonormal as the gyroscopic constraint requires");
      }
    } catch (const std::exception& ex) {
      err.push_back(std::string("initial: ") + ex.what());
    }
    if (c.curved2d() && (!c.actions.empty() || c.potential == "separable-xy" || c.potential == "separable-polar")) {
      try {
        build_scenario2d(c);
      } catch (const std::exception& ex) {
        err.push_back(std::string("inertia: ") + ex.what());
      }
    }
  } catch (const std::exception& ex) {
    err.push_back(std::string("model: ") + ex.what());
  }
  if (!err.empty()) throw ValidationError(err);
}

}  // namespace gyro
