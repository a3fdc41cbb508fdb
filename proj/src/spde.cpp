#include "fusion/spde.hpp"

#include <cmath>
#include <fstream>

#include "fusion/errors.hpp"

namespace fusion {

void MaternParams::validate() const {
  require(range > 0.0 && std::isfinite(range), "Matern range must be positive");
  require(sd > 0.0 && std::isfinite(sd), "Matern sd must be positive");
  require(smoothness > 0.0, "Matern smoothness must be positive");
}

double MaternParams::kappa() const { return std::sqrt(8.0 * smoothness) / range; }

double matern_cov(double dist, const MaternParams& params) {
  params.validate();
  require(dist >= 0.0, "matern_cov: negative distance");
  const double var = params.sd * params.sd;
  if (dist == 0.0) return var;
  const double nu = params.smoothness;
  const double kd = params.kappa() * dist;
  const double scale = std::pow(2.0, 1.0 - nu) / std::tgamma(nu);
  const double bessel = std::cyl_bessel_k(nu, kd);
  return var * scale * std::pow(kd, nu) * bessel;
}

FemOperators::FemOperators(const Mesh& mesh) {
  mesh.validate();
  const int n = mesh.n_vertices();
  mass = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Triplet<double>> gt;
  gt.reserve(static_cast<std::size_t>(mesh.n_triangles()) * 9);
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Point& a = mesh.vertices[tri[0]];
    const Point& b = mesh.vertices[tri[1]];
    const Point& c = mesh.vertices[tri[2]];
    const double area = mesh.triangle_area(t);
    // edge vectors opposite each vertex
    const double ex[3] = {c.x - b.x, a.x - c.x, b.x - a.x};
    const double ey[3] = {c.y - b.y, a.y - c.y, b.y - a.y};
    for (int i = 0; i < 3; ++i) {
      mass[tri[i]] += area / 3.0;
      for (int j = 0; j < 3; ++j)
        gt.emplace_back(tri[i], tri[j], (ex[i] * ex[j] + ey[i] * ey[j]) / (4.0 * area));
    }
  }
  stiffness.resize(n, n);
  stiffness.setFromTriplets(gt.begin(), gt.end());
  SparseMat mass_inv_g = stiffness;
  for (int k = 0; k < mass_inv_g.outerSize(); ++k)
    for (SparseMat::InnerIterator it(mass_inv_g, k); it; ++it)
      it.valueRef() /= mass[it.row()];
  stiff_mass_stiff = (stiffness * mass_inv_g).pruned(1e-300);
  // enforce exact symmetry of the product (rounding is the only source of skew)
  SparseMat sym = SparseMat(stiff_mass_stiff.transpose());
  stiff_mass_stiff = 0.5 * (stiff_mass_stiff + sym);
}

SparseMat FemOperators::precision(const MaternParams& params) const {
  params.validate();
  require(params.smoothness == 1.0,
          "spde_precision supports smoothness 1 only (operator exponent 2 in two dimensions)");
  const double kappa = params.kappa();
  const double k2 = kappa * kappa;
  // nominal marginal variance sd^2:
  // tau^2 = Gamma(nu) / (Gamma(nu+1) * 4 pi * kappa^(2 nu) * sd^2), nu = 1
  const double tau2 = 1.0 / (4.0 * M_PI * k2 * params.sd * params.sd);
  const int n = static_cast<int>(mass.size());
  SparseMat cmat(n, n);
  cmat.setIdentity();
  for (int i = 0; i < n; ++i) cmat.coeffRef(i, i) = mass[i];
  SparseMat q = tau2 * (k2 * k2 * cmat + 2.0 * k2 * stiffness + stiff_mass_stiff);
  return q;
}

SparseMat spde_precision(const Mesh& mesh, const MaternParams& params) {
  return FemOperators(mesh).precision(params);
}

void write_sparse_coo(const SparseMat& m, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "write_sparse_coo: cannot open " + path);
  out << m.rows() << " " << m.cols() << " " << m.nonZeros() << "\n";
  char buf[80];
  for (int k = 0; k < m.outerSize(); ++k)
    for (SparseMat::InnerIterator it(m, k); it; ++it) {
      std::snprintf(buf, sizeof(buf), "%ld %ld %.17g\n", static_cast<long>(it.row()),
                    static_cast<long>(it.col()), it.value());
      out << buf;
    }
  require(out.good(), "write_sparse_coo: write failed for " + path);
}

}  // namespace fusion
