#include "gyrocurve/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace gyro;
namespace fs = std::filesystem;

namespace {

const std::string kDir = GYRO_SCENARIO_DIR;

std::string path_of(const std::string& name) { return kDir + "/" + name + ".json"; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& tag) {
  fs::path d = fs::temp_directory_path() / ("gyro_cli_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  return d;
}

fs::path write_temp(const std::string& tag, const std::string& text) {
  fs::path d = fresh_dir(tag);
  fs::create_directories(d);
  fs::path p = d / (tag + ".json");
  std::ofstream(p) << text;
  return p;
}

const char* kMinimal = R"({
  "name": "minimal",
  "manifold": "flat2d",
  "inertia": {"m": 1.0, "J": [[1.0]]},
  "initial": {"x": [0, 0], "v": [1, 0], "edot": [[0, 0], [0, 0]]},
  "integrator": {"dt": 0.01, "t_end": 0.1}
})";

std::vector<std::string> shipped() {
  std::vector<std::string> v;
  for (const auto& e : fs::directory_iterator(kDir))
    if (e.path().extension() == ".json") v.push_back(e.path().string());
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST(Config, MinimalFlatConfigIsValid) {
  ScenarioConfig c = parse_config(kMinimal);
  EXPECT_EQ(c.name, "minimal");
  EXPECT_EQ(c.potential, "none");
  EXPECT_EQ(c.integrator.method, "rk4");
  EXPECT_NO_THROW(validate_semantics(c));
  cli::SimulationOutput r = cli::simulate(c);
  EXPECT_EQ(r.record.steps, 10);
  EXPECT_EQ(r.record.samples.size(), 11u);
}

TEST(Config, PoleReportedWithKeyPath) {
  std::string t = R"({"name": "p", "manifold": "sphere", "frame": "polar-orthonormal", "inertia": {"m": 1, "J": [[1]]},
    "initial": {"x": [0.0, 0.3], "v": [0, 1], "omega_hat": [[0, 0], [0, 0]]}, "integrator": {"dt": 0.01, "t_end": 1}})";
  try {
    parse_config(t);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& ex) {
    ASSERT_EQ(ex.errors.size(), 1u);
    EXPECT_NE(ex.errors[0].find("initial.x[0]"), std::string::npos);
  }
}

TEST(Config, UnknownPotentialNamesKey) {
  nlohmann::json j = nlohmann::json::parse(kMinimal);
  j["potential"] = "lennard-jones";
  try {
    config_from_json(j);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& ex) {
    EXPECT_NE(std::string(ex.what()).find("potential"), std::string::npos);
    EXPECT_NE(std::string(ex.what()).find("lennard-jones"), std::string::npos);
  }
}

TEST(Config, AllErrorsCollected) {
  nlohmann::json j = nlohmann::json::parse(kMinimal);
  j["integrator"]["dt"] = -1;
  j["integrator"]["method"] = "euler";
  j["inertia"]["m"] = 0;
  j["colour"] = "blue";
  try {
    config_from_json(j);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& ex) {
    EXPECT_GE(ex.errors.size(), 4u);
    auto has = [&](const std::string& k) {
      return std::any_of(ex.errors.begin(), ex.errors.end(), [&](const auto& e) { return e.find(k) != std::string::npos; });
    };
    EXPECT_TRUE(has("integrator.dt"));
    EXPECT_TRUE(has("integrator.method"));
    EXPECT_TRUE(has("inertia.m"));
    EXPECT_TRUE(has("colour"));
  }
}

TEST(Config, ParseErrorCarriesLine) {
  try {
    parse_config("{\n  \"name\": \"x\",\n  \"manifold\": ,\n}\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& ex) {
    EXPECT_EQ(ex.line, 3);
  }
}

TEST(Config, RenderRoundTripForShippedScenarios) {
  auto files = shipped();
  EXPECT_EQ(files.size(), 9u);
  for (const auto& f : files) {
    ScenarioConfig c = cli::load_config_file(f);
    EXPECT_EQ(parse_config(render_config(c)), c) << f;
  }
}

TEST(Config, TwoPolarInitialDataOutsideWedgeRejected) {
  ScenarioConfig c = cli::load_config_file(path_of("sphere_separable_harmonic"));
  nlohmann::json j = render_json(c);
  j["initial"]["q"][4] = 1.5;
  EXPECT_THROW(config_from_json(j), ValidationError);
}

TEST(Simulate, OutputIsDeterministic) {
  fs::path a = fresh_dir("det_a"), b = fresh_dir("det_b");
  std::ostringstream o, e;
  ASSERT_EQ(cli::cmd_simulate({{path_of("sphere_spin")}, a.string(), false, 1}, o, e), cli::kOk) << e.str();
  ASSERT_EQ(cli::cmd_simulate({{path_of("sphere_spin")}, b.string(), false, 1}, o, e), cli::kOk) << e.str();
  EXPECT_EQ(slurp(a / "sphere_spin.csv"), slurp(b / "sphere_spin.csv"));
  auto ja = nlohmann::json::parse(slurp(a / "sphere_spin.summary.json"));
  auto jb = nlohmann::json::parse(slurp(b / "sphere_spin.summary.json"));
  for (auto* j : {&ja, &jb}) {
    j->erase("wall_time");
    j->erase("timestamp");
  }
  EXPECT_EQ(ja, jb);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Simulate, BinaryIsDeterministicAcrossThreads) {
  fs::path a = fresh_dir("bin_a"), b = fresh_dir("bin_b");
  const std::string exe = GYRO_CLI_PATH;
  const std::string cfgs = " -c " + path_of("flat_reduction") + " -c " + path_of("sphere_geodesic");
  ASSERT_EQ(std::system((exe + " simulate" + cfgs + " --out " + a.string() + " > /dev/null").c_str()), 0);
  ASSERT_EQ(std::system((exe + " simulate" + cfgs + " --threads 2 --out " + b.string() + " > /dev/null").c_str()), 0);
  for (const char* f : {"flat_reduction.csv", "sphere_geodesic.csv"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Simulate, DryRunWritesNothing) {
  fs::path d = fresh_dir("dry");
  std::ostringstream o, e;
  EXPECT_EQ(cli::cmd_simulate({{path_of("sphere_free_gyro")}, d.string(), true, 1}, o, e), cli::kOk);
  EXPECT_FALSE(fs::exists(d));
  EXPECT_EQ(parse_config(o.str()), cli::load_config_file(path_of("sphere_free_gyro")));
}

TEST(Simulate, CsvSchema) {
  cli::SimulationOutput r = cli::simulate(parse_config(kMinimal));
  std::ostringstream os;
  cli::write_csv(r.record, 2, os);
  std::istringstream in(os.str());
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  auto h = cli::csv_header(r.record, 2);
  EXPECT_EQ(h.front(), "t");
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), static_cast<long>(h.size()) - 1);
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), static_cast<long>(h.size()) - 1);
  EXPECT_NE(row.find(",velocity,"), std::string::npos);
}

TEST(Simulate, GyroscopicScenarioSummary) {
  cli::SimulationOutput r = cli::simulate(cli::load_config_file(path_of("sphere_free_gyro")));
  EXPECT_LT(r.summary["energy_drift"].get<double>(), 1e-8);
  EXPECT_LT(r.summary["constraint_residual_max"].get<double>(), 1e-7);
  EXPECT_EQ(r.summary["status"], "ok");
}

TEST(Simulate, ReferenceDeviationsInSummary) {
  auto flat = cli::simulate(cli::load_config_file(path_of("flat_reduction"))).summary;
  EXPECT_LT(flat["flat_closed_form_deviation"].get<double>(), 1e-9);
  auto geo = cli::simulate(cli::load_config_file(path_of("sphere_geodesic"))).summary;
  EXPECT_LT(geo["geodesic_deviation"].get<double>(), 1e-7);
  auto sep = cli::simulate(cli::load_config_file(path_of("sphere_separable_harmonic"))).summary;
  EXPECT_LT(sep["action_oracle_deviation"].get<double>(), 1e-6);
}

TEST(Simulate, RuntimeFailureExitCode) {
  std::string t = R"({"name": "pole", "manifold": "sphere", "frame": "polar-orthonormal", "inertia": {"m": 1, "J": [[1]]},
    "initial": {"x": [0.5, 0.0], "v": [-1, 0], "omega_hat": [[0, 0], [0, 0]]}, "integrator": {"dt": 0.01, "t_end": 2}})";
  fs::path p = write_temp("pole", t);
  std::ostringstream o, e;
  EXPECT_EQ(cli::cmd_simulate({{p.string()}, p.parent_path().string(), false, 1}, o, e), cli::kRuntime);
  EXPECT_NE(e.str().find("step failure"), std::string::npos);
  fs::remove_all(p.parent_path());
}

TEST(Simulate, MissingFileIsValidationError) {
  std::ostringstream o, e;
  EXPECT_EQ(cli::cmd_simulate({{kDir + "/does_not_exist.json"}, ".", true, 1}, o, e), cli::kValidation);
}

TEST(Actions, UnboundRowWarnsAndSucceeds) {
  ScenarioConfig c = cli::load_config_file(path_of("pseudosphere_separable"));
  nlohmann::json j = render_json(c);
  SeparationConstants k = cli::constants_from_initial(c);
  j["actions"] = nlohmann::json::array(
      {{{"E", k.E}, {"l", k.l}, {"C_alpha", k.C_alpha}, {"C_beta", k.C_beta}, {"C_x", k.C_x}, {"C_y", k.C_y}},
       {{"E", k.E + 50}, {"l", k.l}, {"C_alpha", k.C_alpha}, {"C_beta", k.C_beta}, {"C_x", k.C_x}, {"C_y", k.C_y}}});
  fs::path p = write_temp("unbound", j.dump(2));
  std::ostringstream o, e;
  EXPECT_EQ(cli::cmd_actions({p.string()}, 1, o, e), cli::kOk);
  auto out = nlohmann::json::parse(o.str());
  ASSERT_EQ(out["rows"].size(), 2u);
  EXPECT_EQ(out["rows"][0]["status"], "ok");
  EXPECT_LT(out["rows"][0]["max_relative_difference"].get<double>(), 1e-6);
  EXPECT_EQ(out["rows"][1]["status"], "unbound");
  EXPECT_NE(e.str().find("warning"), std::string::npos);
  fs::remove_all(p.parent_path());
}

TEST(Verify, FlatSpaceSkipsCurvatureCheck) {
  std::ostringstream o, e;
  EXPECT_EQ(cli::cmd_verify({{path_of("flat_reduction")}, 3, 5, false, 1}, o, e), cli::kOk);
  EXPECT_NE(o.str().find("SKIP"), std::string::npos);
  std::ostringstream o2, e2;
  EXPECT_EQ(cli::cmd_verify({{path_of("flat_reduction")}, 3, 5, true, 1}, o2, e2), cli::kOk);
  EXPECT_NE(o2.str().find("no effect"), std::string::npos);
}

TEST(Verify, FlippedCurvatureFailsOnSphere) {
  std::ostringstream o, e;
  EXPECT_EQ(cli::cmd_verify({{path_of("sphere_spin")}, 3, 5, false, 1}, o, e), cli::kOk) << o.str();
  std::ostringstream o2, e2;
  EXPECT_EQ(cli::cmd_verify({{path_of("sphere_spin")}, 3, 5, true, 1}, o2, e2), cli::kVerifyFailure);
  EXPECT_NE(o2.str().find("FAIL"), std::string::npos);
}

TEST(List, ShowsShippedScenarios) {
  std::ostringstream o, e;
  EXPECT_EQ(cli::cmd_list(kDir, o, e), cli::kOk);
  const std::string listing = o.str();
  EXPECT_EQ(std::count(listing.begin(), listing.end(), '\n'), 9);
  EXPECT_NE(listing.find("sphere_free_gyro"), std::string::npos);
  std::ostringstream o2, e2;
  EXPECT_EQ(cli::cmd_list(kDir + "/nope", o2, e2), cli::kValidation);
}
