#include "datafusion.h"

#include <cstring>
#include <string>

#include "fusion/errors.hpp"
#include "fusion/io.hpp"
#include "fusion/runner.hpp"
#include "fusion/version.hpp"

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }

template <typename Fn>
df_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    fn();
    return DF_OK;
  } catch (const fusion::validation_error& e) {
    set_error(e.what());
    return DF_ERR_VALIDATION;
  } catch (const fusion::numeric_error& e) {
    set_error(e.what());
    return DF_ERR_NUMERIC;
  } catch (const std::exception& e) {
    set_error(e.what());
    return DF_ERR_IO;
  }
}

fusion::Json parse_overrides(const char* overrides_json) {
  if (overrides_json == nullptr || overrides_json[0] == '\0')
    return fusion::Json(nullptr);
  try {
    return fusion::Json::parse(overrides_json);
  } catch (const std::exception& e) {
    throw fusion::validation_error(std::string("overrides are not valid JSON: ") + e.what());
  }
}

fusion::RunConfig load(const char* config_path, const char* overrides_json) {
  fusion::require(config_path != nullptr, "config path is null");
  return fusion::load_config(config_path, parse_overrides(overrides_json));
}

}  // namespace

struct df_mesh {
  fusion::Mesh mesh;
};

struct df_fit {
  fusion::FitArtifact artifact;
};

extern "C" {

const char* df_version(void) { return fusion::kVersion; }

const char* df_last_error(void) { return g_last_error.c_str(); }

df_status df_mesh_build(const double* boundary_xy, size_t n_vertices, double max_edge,
                        double extension, df_mesh** out) {
  return guarded([&] {
    fusion::require(boundary_xy != nullptr && out != nullptr, "null argument");
    fusion::Domain domain;
    for (size_t i = 0; i < n_vertices; ++i)
      domain.boundary.push_back({boundary_xy[2 * i], boundary_xy[2 * i + 1]});
    auto handle = new df_mesh{fusion::build_mesh(domain, max_edge, extension)};
    *out = handle;
  });
}

df_status df_mesh_read(const char* path, df_mesh** out) {
  return guarded([&] {
    fusion::require(path != nullptr && out != nullptr, "null argument");
    *out = new df_mesh{fusion::read_mesh(path)};
  });
}

df_status df_mesh_write(const df_mesh* mesh, const char* path) {
  return guarded([&] {
    fusion::require(mesh != nullptr && path != nullptr, "null argument");
    fusion::write_mesh(mesh->mesh, path);
  });
}

size_t df_mesh_n_vertices(const df_mesh* mesh) {
  return mesh == nullptr ? 0 : static_cast<size_t>(mesh->mesh.n_vertices());
}

size_t df_mesh_n_triangles(const df_mesh* mesh) {
  return mesh == nullptr ? 0 : static_cast<size_t>(mesh->mesh.n_triangles());
}

void df_mesh_free(df_mesh* mesh) { delete mesh; }

df_status df_mesh_project(const df_mesh* mesh, const double* points_xy, size_t n_points,
                          int32_t* rows, int32_t* cols, double* weights, size_t cap,
                          size_t* n_out) {
  return guarded([&] {
    fusion::require(mesh != nullptr && points_xy != nullptr && rows != nullptr &&
                        cols != nullptr && weights != nullptr && n_out != nullptr,
                    "null argument");
    std::vector<fusion::Point> pts;
    pts.reserve(n_points);
    for (size_t i = 0; i < n_points; ++i)
      pts.push_back({points_xy[2 * i], points_xy[2 * i + 1]});
    const fusion::ProjectionMatrix proj = fusion::project(mesh->mesh, pts);
    size_t k = 0;
    for (int r = 0; r < proj.rows(); ++r)
      for (fusion::ProjectionMatrix::InnerIterator it(proj, r); it; ++it) {
        fusion::require(k < cap, "projection output capacity too small");
        rows[k] = static_cast<int32_t>(it.row());
        cols[k] = static_cast<int32_t>(it.col());
        weights[k] = it.value();
        ++k;
      }
    *n_out = k;
  });
}

df_status df_matern_cov(double dist, double range, double sd, double smoothness,
                        double* out) {
  return guarded([&] {
    fusion::require(out != nullptr, "null output");
    *out = fusion::matern_cov(dist, {range, sd, smoothness});
  });
}

df_status df_pc_sd_logpdf(double sd, double threshold, double prob, double* out) {
  return guarded([&] {
    fusion::require(out != nullptr, "null output");
    *out = fusion::pc_sd_logpdf(sd, {fusion::PCKind::sd_upper, threshold, prob});
  });
}

df_status df_pc_range_logpdf(double range, double threshold, double prob, double* out) {
  return guarded([&] {
    fusion::require(out != nullptr, "null output");
    *out = fusion::pc_range_logpdf(range, {fusion::PCKind::range_lower, threshold, prob});
  });
}

df_status df_bma_weights(const double* log_ml, size_t n, double* weights) {
  return guarded([&] {
    fusion::require(log_ml != nullptr && weights != nullptr && n > 0, "bad arguments");
    const std::vector<double> lml(log_ml, log_ml + n);
    const std::vector<double> w =
        fusion::bma_weights(lml, std::vector<double>(n, 0.0));
    std::memcpy(weights, w.data(), n * sizeof(double));
  });
}

df_status df_fit_load(const char* dir, df_fit** out) {
  return guarded([&] {
    fusion::require(dir != nullptr && out != nullptr, "null argument");
    *out = new df_fit{fusion::load_fit(dir)};
  });
}

void df_fit_free(df_fit* fit) { delete fit; }

size_t df_fit_n_members(const df_fit* fit) {
  return fit == nullptr ? 0 : fit->artifact.ensemble.members.size();
}

df_status df_fit_weights(const df_fit* fit, double* weights, size_t cap) {
  return guarded([&] {
    fusion::require(fit != nullptr && weights != nullptr, "null argument");
    const auto& members = fit->artifact.ensemble.members;
    fusion::require(cap >= members.size(), "weight buffer too small");
    for (size_t i = 0; i < members.size(); ++i) weights[i] = members[i].weight;
  });
}

df_status df_fit_predict(const df_fit* fit, const double* xyt, const double* covariates,
                         size_t n, size_t n_covariates, double* mean, double* sd) {
  return guarded([&] {
    fusion::require(fit != nullptr && xyt != nullptr && mean != nullptr && sd != nullptr,
                    "null argument");
    std::vector<fusion::PredictionTarget> targets;
    targets.reserve(n);
    for (size_t i = 0; i < n; ++i) {
      fusion::PredictionTarget t;
      t.location = {xyt[3 * i], xyt[3 * i + 1]};
      t.t = static_cast<int>(xyt[3 * i + 2]);
      t.covariates.resize(static_cast<int>(n_covariates));
      for (size_t k = 0; k < n_covariates; ++k) {
        fusion::require(covariates != nullptr, "covariates required");
        t.covariates[static_cast<int>(k)] = covariates[i * n_covariates + k];
      }
      targets.push_back(std::move(t));
    }
    const fusion::PredictionSummary p = fit->artifact.ensemble.predict(targets);
    for (size_t i = 0; i < n; ++i) {
      mean[i] = p.mean[static_cast<int>(i)];
      sd[i] = p.sd[static_cast<int>(i)];
    }
  });
}

df_status df_cmd_simulate(const char* config_path, const char* overrides_json) {
  return guarded([&] { fusion::cmd_simulate(load(config_path, overrides_json)); });
}

df_status df_cmd_fit(const char* config_path, const char* stations_csv,
                     const char* grid_csv, const char* overrides_json) {
  return guarded([&] {
    fusion::require(stations_csv != nullptr, "stations csv path is null");
    fusion::cmd_fit(load(config_path, overrides_json), stations_csv,
                    grid_csv == nullptr ? "" : grid_csv);
  });
}

df_status df_cmd_predict(const char* fit_dir, const char* targets_csv, const char* out_dir,
                         int calibrate) {
  return guarded([&] {
    fusion::require(fit_dir != nullptr && targets_csv != nullptr, "null argument");
    fusion::PredictOptions opts;
    if (out_dir != nullptr) opts.out = out_dir;
    opts.calibrate = calibrate != 0;
    fusion::cmd_predict(fit_dir, targets_csv, opts);
  });
}

df_status df_cmd_cv(const char* config_path, const char* stations_csv, const char* grid_csv,
                    const char* overrides_json) {
  return guarded([&] {
    fusion::require(stations_csv != nullptr, "stations csv path is null");
    fusion::cmd_cv(load(config_path, overrides_json), stations_csv,
                   grid_csv == nullptr ? "" : grid_csv);
  });
}

df_status df_cmd_report(const char* results_dir, const char* out_dir) {
  return guarded([&] {
    fusion::require(results_dir != nullptr, "results dir is null");
    fusion::cmd_report(results_dir, out_dir == nullptr ? "" : out_dir);
  });
}

df_status df_cmd_fixtures(const char* out_dir) {
  return guarded([&] {
    fusion::require(out_dir != nullptr, "output dir is null");
    fusion::cmd_fixtures(out_dir);
  });
}

}  // extern "C"
