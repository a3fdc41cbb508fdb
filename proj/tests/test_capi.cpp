#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "datafusion.h"
#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("dfuse_capi_" + std::to_string(getpid()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// a small but complete fusion study configuration
std::string study_config(const std::string& out, int replicates, bool fit) {
  std::ostringstream cfg;
  cfg << R"({
  "seed": 424,
  "out": ")" << out
      << R"(",
  "model": {"family": "fusion", "alpha_grid": [0.9, 1.0, 1.1, 1.2]},
  "covariates": {"design": [{"name": "z", "source": "z"}]},
  "priors": {
    "noise_stations": {"threshold": 0.25, "prob": 0.5},
    "noise_grid": {"threshold": 0.01, "prob": 0.5},
    "latent_sd": {"threshold": 3.16, "prob": 0.5},
    "latent_range": {"threshold": 2.0, "prob": 0.5},
    "bias_sd": {"threshold": 1.0, "prob": 0.5},
    "bias_range": {"threshold": 1.0, "prob": 0.5}
  },
  "optimizer": {"max_iters": 60, "restarts": 0},
  "simulation": {
    "scenario": "n10",
    "replicates": )"
      << replicates << R"(,
    "fit": )" << (fit ? "true" : "false")
      << R"(,
    "families": ["stations_only"],
    "prior_scenarios": ["matching"],
    "sim_grid": [12, 12],
    "coarse_grid": [4, 4],
    "mesh_max_edge": 0.6,
    "mesh_extension": 1.0
  }
})";
  return cfg.str();
}

}  // namespace

TEST_CASE("version and error reporting") {
  CHECK(std::string(df_version()) == "0.1.0");
  CHECK(df_cmd_simulate(nullptr, nullptr) != DF_OK);
  CHECK(std::string(df_last_error()).size() > 0);
}

TEST_CASE("mesh handles and projection through the C surface") {
  const double boundary[] = {0, 0, 1, 0, 1, 1, 0, 1};
  df_mesh* mesh = nullptr;
  REQUIRE(df_mesh_build(boundary, 4, 0.4, 0.2, &mesh) == DF_OK);
  CHECK(df_mesh_n_vertices(mesh) > 4);
  CHECK(df_mesh_n_triangles(mesh) > 0);

  const double pts[] = {0.5, 0.5, 0.25, 0.75};
  int32_t rows[6];
  int32_t cols[6];
  double w[6];
  size_t n_out = 0;
  REQUIRE(df_mesh_project(mesh, pts, 2, rows, cols, w, 6, &n_out) == DF_OK);
  CHECK(n_out >= 2);
  double sums[2] = {0, 0};
  for (size_t k = 0; k < n_out; ++k) sums[rows[k]] += w[k];
  CHECK(sums[0] == doctest::Approx(1.0));
  CHECK(sums[1] == doctest::Approx(1.0));

  TempDir tmp;
  REQUIRE(df_mesh_write(mesh, tmp.file("m.txt").c_str()) == DF_OK);
  df_mesh* back = nullptr;
  REQUIRE(df_mesh_read(tmp.file("m.txt").c_str(), &back) == DF_OK);
  CHECK(df_mesh_n_vertices(back) == df_mesh_n_vertices(mesh));
  df_mesh_free(back);

  // out-of-domain projection surfaces a validation error
  const double outside[] = {9.0, 9.0};
  CHECK(df_mesh_project(mesh, outside, 1, rows, cols, w, 3, &n_out) == DF_ERR_VALIDATION);
  CHECK(std::string(df_last_error()).find("outside") != std::string::npos);
  df_mesh_free(mesh);
}

TEST_CASE("closed-form helpers through the C surface") {
  double v = 0.0;
  REQUIRE(df_matern_cov(0.0, 1.0, 2.0, 1.0, &v) == DF_OK);
  CHECK(v == doctest::Approx(4.0));
  REQUIRE(df_matern_cov(1.3, 1.3, 1.0, 1.0, &v) == DF_OK);
  CHECK(v == doctest::Approx(0.13966747401529314).epsilon(1e-12));

  REQUIRE(df_pc_sd_logpdf(1.0, 1.0, std::exp(-1.0), &v) == DF_OK);
  CHECK(v == doctest::Approx(-1.0));
  CHECK(df_pc_sd_logpdf(-1.0, 1.0, 0.5, &v) == DF_ERR_VALIDATION);

  const double lml[] = {-978.295, -914.791, -849.673, -778.493, -697.501, -688.142,
                        -811.927, -899.762, -949.719, -2265.074, -2329.848};
  double w[11];
  REQUIRE(df_bma_weights(lml, 11, w) == DF_OK);
  CHECK(w[5] >= 0.9999);
  for (int k = 0; k < 11; ++k)
    if (k != 5) CHECK(w[k] <= 1e-4);
}

TEST_CASE("simulate and report through the C commands") {
  TempDir tmp;
  const std::string out = tmp.file("study");
  write_file(tmp.file("study.json"), study_config(out, 2, true));
  REQUIRE(df_cmd_simulate(tmp.file("study.json").c_str(), nullptr) == DF_OK);
  CHECK(fs::exists(out + "/config.json"));
  CHECK(fs::exists(out + "/scores.csv"));
  CHECK(fs::exists(out + "/summary.csv"));
  CHECK(fs::exists(out + "/replicates/rep0000/stations.csv"));

  // one station row per station per time point in the n10 scenario
  std::istringstream stations(slurp(out + "/replicates/rep0000/stations.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(stations, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 10);

  REQUIRE(df_cmd_report(out.c_str(), (out + "/report").c_str()) == DF_OK);
  CHECK(fs::exists(out + "/report/fig_field_scores.csv"));
  CHECK(fs::exists(out + "/report/report_manifest.json"));

  // report rerun is idempotent
  const std::string first = slurp(out + "/report/fig_field_scores.csv");
  REQUIRE(df_cmd_report(out.c_str(), (out + "/report").c_str()) == DF_OK);
  CHECK(slurp(out + "/report/fig_field_scores.csv") == first);
}

TEST_CASE("byte-identical reruns of simulate, fit, and cv") {
  TempDir tmp;
  // simulate twice with the same seed
  write_file(tmp.file("a.json"), study_config(tmp.file("a"), 1, false));
  write_file(tmp.file("b.json"), study_config(tmp.file("b"), 1, false));
  REQUIRE(df_cmd_simulate(tmp.file("a.json").c_str(), nullptr) == DF_OK);
  REQUIRE(df_cmd_simulate(tmp.file("b.json").c_str(), nullptr) == DF_OK);
  CHECK(slurp(tmp.file("a") + "/replicates/rep0000/stations.csv") ==
        slurp(tmp.file("b") + "/replicates/rep0000/stations.csv"));
  CHECK(slurp(tmp.file("a") + "/replicates/rep0000/grid.csv") ==
        slurp(tmp.file("b") + "/replicates/rep0000/grid.csv"));

  // fit twice on the simulated data
  const std::string stations = tmp.file("a") + "/replicates/rep0000/stations.csv";
  const std::string grid = tmp.file("a") + "/replicates/rep0000/grid.csv";
  write_file(tmp.file("fit.json"), study_config(tmp.file("fit1"), 1, false));
  const std::string ov1 = R"({"out":")" + tmp.file("fit1") + R"("})";
  const std::string ov2 = R"({"out":")" + tmp.file("fit2") + R"("})";
  REQUIRE(df_cmd_fit(tmp.file("fit.json").c_str(), stations.c_str(), grid.c_str(),
                     ov1.c_str()) == DF_OK);
  REQUIRE(df_cmd_fit(tmp.file("fit.json").c_str(), stations.c_str(), grid.c_str(),
                     ov2.c_str()) == DF_OK);
  CHECK(slurp(tmp.file("fit1") + "/weights.csv") == slurp(tmp.file("fit2") + "/weights.csv"));
  CHECK(slurp(tmp.file("fit1") + "/fit.json").size() > 0);

  // predictions from the loaded artifact
  write_file(tmp.file("targets.csv"), "x,y,t,z\n1.5,1.3,1,0.0\n0.7,2.2,1,0.4\n");
  REQUIRE(df_cmd_predict(tmp.file("fit1").c_str(), tmp.file("targets.csv").c_str(),
                         (tmp.file("pred")).c_str(), 1) == DF_OK);
  CHECK(fs::exists(tmp.file("pred") + "/predictions.csv"));
  CHECK(fs::exists(tmp.file("pred") + "/calibrated.csv"));

  // cv twice
  {
    std::string c = study_config(tmp.file("cv1"), 1, false);
    c = c.substr(0, c.rfind('}')) + ", \"lgocv\": {\"radii\": [0.6, 1.2]}}";
    write_file(tmp.file("cv.json"), c);
  }
  REQUIRE(df_cmd_cv(tmp.file("cv.json").c_str(), stations.c_str(), grid.c_str(),
                    (R"({"out":")" + tmp.file("cvo1") + R"("})").c_str()) == DF_OK);
  REQUIRE(df_cmd_cv(tmp.file("cv.json").c_str(), stations.c_str(), grid.c_str(),
                    (R"({"out":")" + tmp.file("cvo2") + R"("})").c_str()) == DF_OK);
  CHECK(slurp(tmp.file("cvo1") + "/lgocv.csv") == slurp(tmp.file("cvo2") + "/lgocv.csv"));
  CHECK(slurp(tmp.file("cvo1") + "/scores.csv") == slurp(tmp.file("cvo2") + "/scores.csv"));

  // fit artifact handle: weights sum to one
  df_fit* fit = nullptr;
  REQUIRE(df_fit_load(tmp.file("fit1").c_str(), &fit) == DF_OK);
  const size_t n = df_fit_n_members(fit);
  REQUIRE(n == 4);
  double w[8];
  REQUIRE(df_fit_weights(fit, w, 8) == DF_OK);
  double total = 0;
  for (size_t i = 0; i < n; ++i) total += w[i];
  CHECK(total == doctest::Approx(1.0));

  const double xyt[] = {1.5, 1.3, 1.0};
  const double cov[] = {1.0, 0.0};
  double mean = 0, sd = 0;
  REQUIRE(df_fit_predict(fit, xyt, cov, 1, 2, &mean, &sd) == DF_OK);
  CHECK(std::isfinite(mean));
  CHECK(sd > 0.0);
  df_fit_free(fit);
}

TEST_CASE("the CLI maps statuses to exit codes") {
  TempDir tmp;
  write_file(tmp.file("bad.json"), "{\"unknown_key\": 1}");
  const std::string cmd = std::string(DFUSE_BIN) + " simulate --config " +
                          tmp.file("bad.json") + " 2>/dev/null";
  const int rc = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(rc) == 1);

  write_file(tmp.file("ok.json"), study_config(tmp.file("cli_out"), 1, false));
  const std::string ok_cmd = std::string(DFUSE_BIN) + " simulate --config " +
                             tmp.file("ok.json") + " 2>/dev/null";
  CHECK(WEXITSTATUS(std::system(ok_cmd.c_str())) == 0);
  CHECK(fs::exists(tmp.file("cli_out") + "/layout.csv"));

  // fixtures subcommand ships the three layouts
  const std::string fix_cmd =
      std::string(DFUSE_BIN) + " fixtures --out " + tmp.file("fx") + " 2>/dev/null";
  CHECK(WEXITSTATUS(std::system(fix_cmd.c_str())) == 0);
  CHECK(fs::exists(tmp.file("fx") + "/n10.csv"));
  CHECK(fs::exists(tmp.file("fx") + "/n25.csv"));
  CHECK(fs::exists(tmp.file("fx") + "/n40.csv"));
}
