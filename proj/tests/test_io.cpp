#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fusion/errors.hpp"
#include "fusion/io.hpp"
#include "fusion/runner.hpp"

using namespace fusion;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("dfuse_test_" + std::to_string(getpid()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

const char* kBaseConfig = R"({
  "seed": 7,
  "out": "OUT",
  "domain": {"rect": [0, 0, 1, 1]},
  "mesh": {"max_edge": 0.4, "extension": 0.2},
  "model": {"family": "stations_only"},
  "covariates": {"design": [{"name": "z", "source": "z"}]},
  "priors": {
    "noise_stations": {"threshold": 0.5, "prob": 0.5},
    "latent_sd": {"threshold": 1.0, "prob": 0.5},
    "latent_range": {"threshold": 0.6, "prob": 0.5}
  },
  "optimizer": {"max_iters": 60, "restarts": 0}
})";

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

}  // namespace

TEST_CASE("config parsing: unknown keys, grids, defaults, overrides") {
  Json doc = Json::parse(kBaseConfig);
  doc["out"] = "somewhere";
  const RunConfig cfg = parse_config(doc);
  CHECK(cfg.seed == 7);
  CHECK(cfg.model.family == ModelFamily::stations_only);
  CHECK(cfg.mesh_max_edge() == doctest::Approx(0.4));

  // unknown keys are rejected at every level
  Json bad = doc;
  bad["surprise"] = 1;
  CHECK_THROWS_WITH_AS(parse_config(bad), doctest::Contains("unknown key"),
                       validation_error);
  Json bad2 = doc;
  bad2["mesh"]["edge"] = 1;
  CHECK_THROWS_AS(parse_config(bad2), validation_error);

  // alpha grid generation from a range spec
  Json with_grid = doc;
  with_grid["model"]["alpha_grid"] = {{"start", 0.5}, {"stop", 1.5}, {"step", 0.1}};
  const RunConfig cfg2 = parse_config(with_grid);
  REQUIRE(cfg2.model.alpha_grid.size() == 11);
  CHECK(cfg2.model.alpha_grid.front() == doctest::Approx(0.5));
  CHECK(cfg2.model.alpha_grid.back() == doctest::Approx(1.5));

  // mesh defaults derive from the prior median range
  Json no_mesh = doc;
  no_mesh.erase("mesh");
  const RunConfig cfg3 = parse_config(no_mesh);
  CHECK(cfg3.mesh_max_edge() == doctest::Approx(0.6 / 5.0));
  CHECK(cfg3.mesh_extension() == doctest::Approx(0.6));

  // flag > file precedence via overrides
  TempDir tmp;
  write_file(tmp.file("config.json"), doc.dump());
  const RunConfig cfg4 =
      load_config(tmp.file("config.json"), Json{{"seed", 99}, {"out", tmp.file("o")}});
  CHECK(cfg4.seed == 99);
  CHECK(cfg4.out == tmp.file("o"));

  // resolved config re-parses to the same settings
  const Json echo = resolved_config_json(cfg4);
  const RunConfig back = parse_config([&] {
    Json e = echo;
    e.erase("software_version");
    return e;
  }());
  CHECK(back.seed == cfg4.seed);
  CHECK(back.model.alpha_grid == cfg4.model.alpha_grid);
  CHECK(back.mesh_max_edge() == doctest::Approx(cfg4.mesh_max_edge()));
}

TEST_CASE("observation ingestion: missingness, parse errors, alignment") {
  TempDir tmp;
  const RunConfig cfg = parse_config(Json::parse(kBaseConfig));

  write_file(tmp.file("stations.csv"),
             "station_id,x,y,t,value,z\n"
             "a,0.2,0.3,1,1.5,0.1\n"
             "a,0.2,0.3,2,,0.2\n"  // missing value
             "b,0.7,0.6,1,2.5,0.3\n"
             "b,0.7,0.6,2,2.6,0.4\n");
  write_file(tmp.file("grid.csv"),
             "cell_id,x,y,t,value,z\n"
             "g1,0.4,0.4,1,3.0,0.0\n"
             "g1,0.4,0.4,2,3.1,0.0\n");

  const ObservationSet data =
      read_observations(tmp.file("stations.csv"), tmp.file("grid.csv"), cfg);
  CHECK(data.n_times == 2);
  CHECK(data.stations.n_locations() == 2);
  CHECK(data.stations.n_observed() == 3);
  CHECK(!data.stations.observed(0, 2));
  CHECK(data.covariate_names == std::vector<std::string>{"intercept", "z"});

  // parse errors name the line
  write_file(tmp.file("bad.csv"),
             "station_id,x,y,t,value,z\n"
             "a,0.2,0.3,1,1.5,0.1\n"
             "b,0.7,oops,1,2.5,0.3\n");
  CHECK_THROWS_WITH_AS(read_observations(tmp.file("bad.csv"), "", cfg),
                       doctest::Contains("line 3"), validation_error);

  // misaligned time axes name the offending indexes
  write_file(tmp.file("grid_misaligned.csv"),
             "cell_id,x,y,t,value,z\n"
             "g1,0.4,0.4,1,3.0,0.0\n"
             "g1,0.4,0.4,3,3.2,0.0\n");
  CHECK_THROWS_WITH_AS(
      read_observations(tmp.file("stations.csv"), tmp.file("grid_misaligned.csv"), cfg),
      doctest::Contains("3"), validation_error);

  // duplicate (id, t) records are rejected
  write_file(tmp.file("dup.csv"),
             "station_id,x,y,t,value,z\n"
             "a,0.2,0.3,1,1.5,0.1\n"
             "a,0.2,0.3,1,1.6,0.1\n");
  CHECK_THROWS_WITH_AS(read_observations(tmp.file("dup.csv"), "", cfg),
                       doctest::Contains("duplicate"), validation_error);
}

TEST_CASE("covariate transforms and interactions at ingestion") {
  TempDir tmp;
  Json doc = Json::parse(kBaseConfig);
  doc["covariates"] = {
      {"intercept", true},
      {"design",
       {{{"name", "log_elev"}, {"source", "elev"}, {"op", "log"}},
        {{"name", "elev_sq"}, {"source", "elev"}, {"op", "square"}},
        {{"name", "cool_x_type"},
         {"source", "cool"},
         {"op", "interaction"},
         {"source2", "type"}}}}};
  const RunConfig cfg = parse_config(doc);

  write_file(tmp.file("stations.csv"),
             "station_id,x,y,t,value,elev,cool,type\n"
             "a,0.2,0.3,1,1.5,100,1,0\n"
             "b,0.7,0.6,1,2.5,400,1,1\n");
  const ObservationSet data = read_observations(tmp.file("stations.csv"), "", cfg);
  REQUIRE(data.covariate_names ==
          std::vector<std::string>{"intercept", "log_elev", "elev_sq", "cool_x_type"});
  CHECK(data.stations.covariates[1](0, 0) == doctest::Approx(std::log(100.0)));
  CHECK(data.stations.covariates[2](1, 0) == doctest::Approx(160000.0));
  CHECK(data.stations.covariates[3](0, 0) == 0.0);
  CHECK(data.stations.covariates[3](1, 0) == 1.0);
}

TEST_CASE("fit artifact round trip preserves predictions") {
  TempDir tmp;
  Json doc = Json::parse(kBaseConfig);
  doc["out"] = tmp.file("fit_out");
  const RunConfig cfg = parse_config(doc);

  write_file(tmp.file("stations.csv"),
             "station_id,x,y,t,value,z\n"
             "a,0.2,0.3,1,1.5,0.1\n"
             "b,0.7,0.6,1,2.5,0.3\n"
             "c,0.4,0.8,1,2.0,-0.2\n"
             "d,0.8,0.2,1,1.0,0.5\n");

  const std::string dir = cmd_fit(cfg, tmp.file("stations.csv"), "");
  CHECK(fs::exists(dir + "/fit.json"));
  CHECK(fs::exists(dir + "/config.json"));
  CHECK(fs::exists(dir + "/mesh.txt"));
  CHECK(fs::exists(dir + "/weights.csv"));

  const FitArtifact art = load_fit(dir);
  REQUIRE(art.ensemble.members.size() == 1);

  // library-level prediction equals prediction from the reloaded artifact
  const ObservationSet data = read_observations(tmp.file("stations.csv"), "", cfg);
  const Mesh mesh = build_mesh(cfg.domain.domain, cfg.mesh_max_edge(), cfg.mesh_extension(),
                               {cfg.mesh.band_coarsening, cfg.mesh.max_vertices});
  FitOptions fo;
  fo.optim = cfg.optim;
  const PosteriorEnsemble direct =
      single_fit(ModelFamily::stations_only, data, mesh, *cfg.priors, fo);

  PredictionTarget t;
  t.location = {0.5, 0.5};
  t.t = 1;
  t.covariates.resize(2);
  t.covariates << 1.0, 0.2;
  const PredictionSummary pa = art.ensemble.predict({t});
  const PredictionSummary pd = direct.predict({t});
  CHECK(pa.mean[0] == doctest::Approx(pd.mean[0]).epsilon(1e-10));
  CHECK(pa.sd[0] == doctest::Approx(pd.sd[0]).epsilon(1e-10));
}

TEST_CASE("target ingestion flags bad rows") {
  TempDir tmp;
  const RunConfig cfg = parse_config(Json::parse(kBaseConfig));
  write_file(tmp.file("targets.csv"),
             "x,y,t,z\n"
             "0.5,0.5,1,0.2\n"
             "0.6,0.6,9,0.1\n");
  const auto targets = read_targets(tmp.file("targets.csv"), cfg, 1);
  REQUIRE(targets.size() == 2);
  CHECK(targets[0].usable);
  CHECK(!targets[1].usable);
  CHECK(targets[1].issue == "t_out_of_range");
}
