/* C interface to the data-fusion library: opaque handles, status codes, and
 * config-driven commands. All functions return DF_OK on success; on failure
 * df_last_error() describes the problem for the calling thread. */
#ifndef DATAFUSION_H
#define DATAFUSION_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum df_status {
  DF_OK = 0,
  DF_ERR_VALIDATION = 1, /* bad inputs, schema violations, out-of-domain points */
  DF_ERR_NUMERIC = 2,    /* factorization or optimization failure */
  DF_ERR_IO = 3          /* missing or unreadable files */
} df_status;

const char* df_version(void);
const char* df_last_error(void); /* thread-local; empty string when no error */

/* ---- mesh handles ---- */

typedef struct df_mesh df_mesh;

/* boundary_xy: closed polygon as x0,y0,x1,y1,... (n_vertices pairs) */
df_status df_mesh_build(const double* boundary_xy, size_t n_vertices, double max_edge,
                        double extension, df_mesh** out);
df_status df_mesh_read(const char* path, df_mesh** out);
df_status df_mesh_write(const df_mesh* mesh, const char* path);
size_t df_mesh_n_vertices(const df_mesh* mesh);
size_t df_mesh_n_triangles(const df_mesh* mesh);
void df_mesh_free(df_mesh* mesh);

/* Barycentric weights of points_xy (x,y pairs) in their containing triangles.
 * Writes up to 3 (row, col, weight) triplets per point; n_out receives the
 * count. cap is the capacity of the output arrays (3 * n_points suffices). */
df_status df_mesh_project(const df_mesh* mesh, const double* points_xy, size_t n_points,
                          int32_t* rows, int32_t* cols, double* weights, size_t cap,
                          size_t* n_out);

/* ---- closed-form pieces ---- */

df_status df_matern_cov(double dist, double range, double sd, double smoothness,
                        double* out);
df_status df_pc_sd_logpdf(double sd, double threshold, double prob, double* out);
df_status df_pc_range_logpdf(double range, double threshold, double prob, double* out);

/* model-averaging weights from log marginal likelihoods (uniform prior) */
df_status df_bma_weights(const double* log_ml, size_t n, double* weights);

/* ---- fitted-model artifacts ---- */

typedef struct df_fit df_fit;

df_status df_fit_load(const char* dir, df_fit** out);
void df_fit_free(df_fit* fit);
size_t df_fit_n_members(const df_fit* fit);
df_status df_fit_weights(const df_fit* fit, double* weights, size_t cap);

/* Predict the latent surface at n targets. xyt holds x,y,t triples; covariates
 * holds n * n_covariates design values in row-major order (pass NULL when the
 * family needs none). */
df_status df_fit_predict(const df_fit* fit, const double* xyt, const double* covariates,
                         size_t n, size_t n_covariates, double* mean, double* sd);

/* ---- config-driven commands (the CLI surface) ----
 * config_path names a JSON run configuration; overrides_json is an optional
 * JSON object of top-level keys (seed, out, threads, ...) taking precedence
 * over the file, or NULL. */

df_status df_cmd_simulate(const char* config_path, const char* overrides_json);
df_status df_cmd_fit(const char* config_path, const char* stations_csv,
                     const char* grid_csv, const char* overrides_json);
df_status df_cmd_predict(const char* fit_dir, const char* targets_csv, const char* out_dir,
                         int calibrate);
df_status df_cmd_cv(const char* config_path, const char* stations_csv, const char* grid_csv,
                    const char* overrides_json);
df_status df_cmd_report(const char* results_dir, const char* out_dir);
df_status df_cmd_fixtures(const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* DATAFUSION_H */
