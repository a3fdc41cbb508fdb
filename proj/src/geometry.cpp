#include "fusion/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "fusion/errors.hpp"

namespace fusion {

namespace {

double signed_area(const std::vector<Point>& poly) {
  double a = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& p = poly[i];
    const Point& q = poly[(i + 1) % n];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

bool segments_intersect(const Point& a, const Point& b, const Point& c, const Point& d) {
  auto cross = [](const Point& o, const Point& p, const Point& q) {
    return (p.x - o.x) * (q.y - o.y) - (p.y - o.y) * (q.x - o.x);
  };
  const double d1 = cross(c, d, a);
  const double d2 = cross(c, d, b);
  const double d3 = cross(a, b, c);
  const double d4 = cross(a, b, d);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}

}  // namespace

void Domain::validate() const {
  require(boundary.size() >= 3, "domain boundary needs at least 3 vertices");
  for (const Point& p : boundary)
    require(std::isfinite(p.x) && std::isfinite(p.y), "domain boundary has non-finite coordinate");
  require(std::abs(signed_area(boundary)) > 1e-14, "degenerate domain polygon (zero area)");
  // non-adjacent edge pairs must not cross
  const std::size_t n = boundary.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
      if (segments_intersect(boundary[i], boundary[(i + 1) % n], boundary[j],
                             boundary[(j + 1) % n]))
        throw validation_error("self-intersecting domain polygon");
    }
  }
}

double Domain::area() const { return std::abs(signed_area(boundary)); }

bool Domain::contains(const Point& p) const {
  // ray casting; points on the boundary count as inside
  const std::size_t n = boundary.size();
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point& a = boundary[i];
    const Point& b = boundary[j];
    const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    const double dot = (p.x - a.x) * (p.x - b.x) + (p.y - a.y) * (p.y - b.y);
    if (std::abs(cross) < 1e-12 &&
        std::min(a.x, b.x) - 1e-12 <= p.x && p.x <= std::max(a.x, b.x) + 1e-12 && dot <= 1e-12)
      return true;
    if ((a.y > p.y) != (b.y > p.y)) {
      const double xint = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
      if (p.x < xint) inside = !inside;
    }
  }
  return inside;
}

Point Domain::bbox_min() const {
  Point m{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  for (const Point& p : boundary) {
    m.x = std::min(m.x, p.x);
    m.y = std::min(m.y, p.y);
  }
  return m;
}

Point Domain::bbox_max() const {
  Point m{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const Point& p : boundary) {
    m.x = std::max(m.x, p.x);
    m.y = std::max(m.y, p.y);
  }
  return m;
}

Domain Domain::rectangle(double x0, double y0, double x1, double y1, Unit unit) {
  Domain d;
  d.boundary = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
  d.unit = unit;
  d.validate();
  return d;
}

constexpr double kKmPerDegree = 111.32;

Domain degrees_to_km(const Domain& d) {
  require(d.unit == Unit::degrees, "degrees_to_km: domain is not in degrees");
  double lat = 0.0;
  for (const Point& p : d.boundary) lat += p.y;
  lat /= static_cast<double>(d.boundary.size());
  Domain out;
  out.unit = Unit::km;
  out.boundary.reserve(d.boundary.size());
  for (const Point& p : d.boundary) out.boundary.push_back(degrees_to_km(p, lat));
  return out;
}

Point degrees_to_km(const Point& p, double mean_latitude_deg) {
  const double cy = std::cos(mean_latitude_deg * M_PI / 180.0);
  return {p.x * kKmPerDegree * cy, p.y * kKmPerDegree};
}

double Mesh::triangle_area(int t) const {
  const auto& tri = triangles[t];
  const Point& a = vertices[tri[0]];
  const Point& b = vertices[tri[1]];
  const Point& c = vertices[tri[2]];
  return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
}

void Mesh::validate() const {
  require(!vertices.empty() && !triangles.empty(), "empty mesh");
  require(interior.size() == vertices.size(), "mesh interior flags misaligned");
  for (int t = 0; t < n_triangles(); ++t) {
    for (int k : triangles[t])
      require(k >= 0 && k < n_vertices(), "triangle vertex index out of range");
    require(triangle_area(t) > 0.0, "triangle with non-positive area");
  }
}

namespace {

// Grid lines spanning [lo, hi] with spacing <= h, plus a band of width
// `extension` on both sides with spacing <= band_coarsening * h.
std::vector<double> grid_lines(double lo, double hi, double h, double extension,
                               double band_coarsening) {
  std::vector<double> lines;
  const int n_in = std::max(1, static_cast<int>(std::ceil((hi - lo) / h - 1e-12)));
  const double h_in = (hi - lo) / n_in;
  if (extension > 0.0) {
    const double hb_target = band_coarsening * h;
    const int n_band = std::max(1, static_cast<int>(std::ceil(extension / hb_target - 1e-12)));
    const double hb = extension / n_band;
    for (int i = n_band; i >= 1; --i) lines.push_back(lo - i * hb);
  }
  for (int i = 0; i <= n_in; ++i) lines.push_back(lo + i * h_in);
  if (extension > 0.0) {
    const double hb_target = band_coarsening * h;
    const int n_band = std::max(1, static_cast<int>(std::ceil(extension / hb_target - 1e-12)));
    const double hb = extension / n_band;
    for (int i = 1; i <= n_band; ++i) lines.push_back(hi + i * hb);
  }
  return lines;
}

}  // namespace

Mesh build_mesh(const Domain& domain, double max_edge, double extension,
                const MeshOptions& opts) {
  domain.validate();
  require(max_edge > 0.0, "build_mesh: max_edge must be positive");
  require(extension >= 0.0, "build_mesh: extension must be non-negative");

  const Point lo = domain.bbox_min();
  const Point hi = domain.bbox_max();
  // cell side such that the split diagonal stays within max_edge
  const double h = max_edge / std::sqrt(2.0);
  const std::vector<double> xs = grid_lines(lo.x, hi.x, h, extension, opts.band_coarsening);
  const std::vector<double> ys = grid_lines(lo.y, hi.y, h, extension, opts.band_coarsening);

  const std::size_t nx = xs.size();
  const std::size_t ny = ys.size();
  if (nx * ny > static_cast<std::size_t>(opts.max_vertices))
    throw validation_error("build_mesh: vertex count " + std::to_string(nx * ny) +
                           " exceeds cap " + std::to_string(opts.max_vertices) +
                           " (max_edge too small)");

  Mesh mesh;
  mesh.vertices.reserve(nx * ny);
  mesh.interior.reserve(nx * ny);
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) {
      mesh.vertices.push_back({xs[i], ys[j]});
      mesh.interior.push_back(domain.contains({xs[i], ys[j]}));
    }
  auto vid = [nx](std::size_t i, std::size_t j) { return static_cast<int>(j * nx + i); };
  mesh.triangles.reserve(2 * (nx - 1) * (ny - 1));
  for (std::size_t j = 0; j + 1 < ny; ++j)
    for (std::size_t i = 0; i + 1 < nx; ++i) {
      mesh.triangles.push_back({vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)});
      mesh.triangles.push_back({vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)});
    }
  mesh.validate();
  return mesh;
}

namespace {

struct TriLocator {
  // uniform bins over the mesh bounding box
  double x0, y0, cell;
  int nx, ny;
  std::vector<std::vector<int>> bins;

  explicit TriLocator(const Mesh& mesh) {
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const Point& p : mesh.vertices) {
      xmin = std::min(xmin, p.x);
      xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.y);
      ymax = std::max(ymax, p.y);
    }
    const int target = std::max(1, static_cast<int>(std::sqrt(mesh.n_triangles() / 2.0)));
    cell = std::max({(xmax - xmin) / target, (ymax - ymin) / target, 1e-12});
    x0 = xmin;
    y0 = ymin;
    nx = static_cast<int>((xmax - xmin) / cell) + 1;
    ny = static_cast<int>((ymax - ymin) / cell) + 1;
    bins.resize(static_cast<std::size_t>(nx) * ny);
    for (int t = 0; t < mesh.n_triangles(); ++t) {
      double txmin = std::numeric_limits<double>::infinity(), txmax = -txmin;
      double tymin = txmin, tymax = -txmin;
      for (int k : mesh.triangles[t]) {
        const Point& p = mesh.vertices[k];
        txmin = std::min(txmin, p.x);
        txmax = std::max(txmax, p.x);
        tymin = std::min(tymin, p.y);
        tymax = std::max(tymax, p.y);
      }
      for (int bj = clampy(tymin); bj <= clampy(tymax); ++bj)
        for (int bi = clampx(txmin); bi <= clampx(txmax); ++bi)
          bins[static_cast<std::size_t>(bj) * nx + bi].push_back(t);
    }
  }

  int clampx(double x) const {
    return std::clamp(static_cast<int>((x - x0) / cell), 0, nx - 1);
  }
  int clampy(double y) const {
    return std::clamp(static_cast<int>((y - y0) / cell), 0, ny - 1);
  }
  const std::vector<int>& candidates(const Point& p) const {
    return bins[static_cast<std::size_t>(clampy(p.y)) * nx + clampx(p.x)];
  }
};

bool barycentric(const Mesh& mesh, int t, const Point& p, std::array<double, 3>& w) {
  const auto& tri = mesh.triangles[t];
  const Point& a = mesh.vertices[tri[0]];
  const Point& b = mesh.vertices[tri[1]];
  const Point& c = mesh.vertices[tri[2]];
  const double det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
  const double w1 = ((p.x - a.x) * (c.y - a.y) - (c.x - a.x) * (p.y - a.y)) / det;
  const double w2 = ((b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y)) / det;
  const double w0 = 1.0 - w1 - w2;
  const double tol = 1e-10;
  if (w0 < -tol || w1 < -tol || w2 < -tol) return false;
  w = {std::clamp(w0, 0.0, 1.0), std::clamp(w1, 0.0, 1.0), std::clamp(w2, 0.0, 1.0)};
  const double s = w[0] + w[1] + w[2];
  for (double& v : w) v /= s;
  return true;
}

}  // namespace

ProjectionMatrix project(const Mesh& mesh, const std::vector<Point>& points) {
  mesh.validate();
  TriLocator locator(mesh);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(points.size() * 3);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point& p = points[i];
    require(std::isfinite(p.x) && std::isfinite(p.y),
            "project: non-finite coordinates at point " + std::to_string(i));
    bool found = false;
    std::array<double, 3> w{};
    for (int t : locator.candidates(p)) {
      if (barycentric(mesh, t, p, w)) {
        const auto& tri = mesh.triangles[t];
        for (int k = 0; k < 3; ++k)
          if (w[k] != 0.0) trips.emplace_back(static_cast<int>(i), tri[k], w[k]);
        found = true;
        break;
      }
    }
    if (!found)
      throw validation_error("project: point " + std::to_string(i) + " (" +
                             std::to_string(p.x) + ", " + std::to_string(p.y) +
                             ") lies outside the mesh");
  }
  ProjectionMatrix A(static_cast<int>(points.size()), mesh.n_vertices());
  A.setFromTriplets(trips.begin(), trips.end());
  return A;
}

void write_mesh(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "write_mesh: cannot open " + path);
  out << "mesh 1\n";
  out << "vertices " << mesh.n_vertices() << "\n";
  char buf[80];
  for (int i = 0; i < mesh.n_vertices(); ++i) {
    std::snprintf(buf, sizeof(buf), "%d %.17g %.17g %d\n", i, mesh.vertices[i].x,
                  mesh.vertices[i].y, mesh.interior[i] ? 1 : 0);
    out << buf;
  }
  out << "triangles " << mesh.n_triangles() << "\n";
  for (const auto& t : mesh.triangles) out << t[0] << " " << t[1] << " " << t[2] << "\n";
  require(out.good(), "write_mesh: write failed for " + path);
}

Mesh read_mesh(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "read_mesh: cannot open " + path);
  std::string tag;
  int version = 0;
  in >> tag >> version;
  require(tag == "mesh" && version == 1, "read_mesh: unrecognized format in " + path);
  int nv = 0;
  in >> tag >> nv;
  require(tag == "vertices" && nv > 0, "read_mesh: bad vertex table in " + path);
  Mesh mesh;
  mesh.vertices.resize(nv);
  mesh.interior.resize(nv);
  for (int i = 0; i < nv; ++i) {
    int id = 0, flag = 0;
    in >> id >> mesh.vertices[i].x >> mesh.vertices[i].y >> flag;
    require(in.good() && id == i, "read_mesh: bad vertex row " + std::to_string(i));
    mesh.interior[i] = flag != 0;
  }
  int nt = 0;
  in >> tag >> nt;
  require(tag == "triangles" && nt > 0, "read_mesh: bad triangle table in " + path);
  mesh.triangles.resize(nt);
  for (int t = 0; t < nt; ++t) {
    in >> mesh.triangles[t][0] >> mesh.triangles[t][1] >> mesh.triangles[t][2];
    require(!in.fail(), "read_mesh: bad triangle row " + std::to_string(t));
  }
  mesh.validate();
  return mesh;
}

}  // namespace fusion
