#pragma once

#include <Eigen/Sparse>
#include <array>
#include <string>
#include <vector>

namespace fusion {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

enum class Unit { km, degrees };

// Study region: a single closed, non-self-intersecting boundary polygon.
struct Domain {
  std::vector<Point> boundary;  // closed implicitly (last edge joins back to first)
  Unit unit = Unit::degrees;

  void validate() const;
  double area() const;                  // absolute polygon area
  bool contains(const Point& p) const;  // boundary counts as inside
  Point bbox_min() const;
  Point bbox_max() const;

  static Domain rectangle(double x0, double y0, double x1, double y1,
                          Unit unit = Unit::degrees);
};

// Planar km approximation: x scaled by cos(mean latitude), both axes by km/degree.
Domain degrees_to_km(const Domain& d);
Point degrees_to_km(const Point& p, double mean_latitude_deg);

// Triangulation covering the domain plus an extension band. Immutable once built.
struct Mesh {
  std::vector<Point> vertices;
  std::vector<std::array<int, 3>> triangles;  // CCW vertex indices
  std::vector<bool> interior;                 // vertex inside the original domain

  int n_vertices() const { return static_cast<int>(vertices.size()); }
  int n_triangles() const { return static_cast<int>(triangles.size()); }
  double triangle_area(int t) const;
  void validate() const;
};

struct MeshOptions {
  // coarsening factor for grid spacing in the extension band
  double band_coarsening = 2.0;
  int max_vertices = 200000;
};

// Graded tensor-product triangulation of the extended bounding box. All edges
// inside the domain's bounding box are <= max_edge; band spacing is coarser.
Mesh build_mesh(const Domain& domain, double max_edge, double extension,
                const MeshOptions& opts = {});

// Rows are barycentric weights of each point in its containing triangle:
// at most 3 nonzeros per row, each row sums to 1, weights in [0,1].
using ProjectionMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

ProjectionMatrix project(const Mesh& mesh, const std::vector<Point>& points);

// Plain-text mesh exchange format (see README): a vertex table followed by a
// triangle table.
void write_mesh(const Mesh& mesh, const std::string& path);
Mesh read_mesh(const std::string& path);

}  // namespace fusion
