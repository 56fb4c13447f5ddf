#include "cloakopt/scattering.hpp"

#include <Eigen/UmfPackSupport>
#include <cmath>
#include <numbers>
#include <ostream>

#include "cloakopt/error.hpp"

namespace cloak {

struct Factorization::Impl {
  ComplexSparse A;
  Eigen::UmfPackLU<ComplexSparse> lu;
  bool analyzed = false;
  bool factored = false;
};

Factorization::Factorization() : impl_(std::make_unique<Impl>()) {}
Factorization::~Factorization() = default;
Factorization::Factorization(Factorization &&) noexcept = default;
Factorization &Factorization::operator=(Factorization &&) noexcept = default;

void Factorization::factorize(const ComplexSparse &A) {
  if (A.rows() != A.cols()) throw SolverError("factorization: matrix is not square");
  const bool same_pattern =
      impl_->analyzed && impl_->A.rows() == A.rows() && impl_->A.nonZeros() == A.nonZeros() && A.isCompressed() &&
      std::equal(A.outerIndexPtr(), A.outerIndexPtr() + A.outerSize() + 1, impl_->A.outerIndexPtr()) &&
      std::equal(A.innerIndexPtr(), A.innerIndexPtr() + A.nonZeros(), impl_->A.innerIndexPtr());
  impl_->A = A;
  impl_->A.makeCompressed();
  impl_->factored = false;
  if (!same_pattern) {
    impl_->lu.analyzePattern(impl_->A);
    if (impl_->lu.info() != Eigen::Success) throw SolverError("factorization: symbolic analysis failed");
    impl_->analyzed = true;
  }
  impl_->lu.factorize(impl_->A);
  if (impl_->lu.info() != Eigen::Success)
    throw SolverError("factorization: zero or ill-conditioned pivot (discrete operator singular at this frequency)");
  impl_->factored = true;
}

bool Factorization::ready() const { return impl_->factored; }

const ComplexSparse &Factorization::matrix() const { return impl_->A; }

Eigen::VectorXcd Factorization::solve(const Eigen::VectorXcd &b) const {
  if (!impl_->factored) throw SolverError("factorization: solve before factorize");
  Eigen::VectorXcd x = impl_->lu.solve(b);
  const double nb = b.norm();
  if (nb == 0.0) return x;
  const Eigen::VectorXcd r = b - impl_->A * x;
  if (r.norm() > 1e-13 * nb) x += impl_->lu.solve(r);
  if (!x.allFinite()) throw SolverError("factorization: non-finite solution");
  return x;
}

double relative_residual(const ComplexSparse &A, const Eigen::VectorXcd &x, const Eigen::VectorXcd &b) {
  const double nb = b.norm();
  const double nr = (A * x - b).norm();
  if (nb == 0.0) return nr;
  return nr / nb;
}

Eigen::VectorXcd solve_state(Factorization &fact, const ComplexSparse &A, const Eigen::VectorXcd &f) {
  fact.factorize(A);
  Eigen::VectorXcd p = fact.solve(f);
  const double res = relative_residual(A, p, f);
  if (!(res <= 1e-10)) throw SolverError("state solve: relative residual " + std::to_string(res) + " exceeds 1e-10");
  return p;
}

Eigen::VectorXcd solve_adjoint(const Factorization &fact, const RealSparse &M_Da, const Eigen::VectorXcd &p) {
  const Eigen::VectorXcd rhs = M_Da * p;
  Eigen::VectorXcd lam = fact.solve(rhs.conjugate()).conjugate();
  const double res = relative_residual(fact.matrix(), lam.conjugate(), rhs.conjugate());
  if (!(res <= 1e-10)) throw SolverError("adjoint solve: relative residual " + std::to_string(res) + " exceeds 1e-10");
  return lam;
}

Eigen::VectorXcd solve_adjoint_direct(const ComplexSparse &A, const RealSparse &M_Da, const Eigen::VectorXcd &p) {
  const ComplexSparse Abar = A.conjugate();
  Factorization f;
  f.factorize(Abar);
  const Eigen::VectorXcd rhs = (M_Da * p).cast<cplx>();
  return f.solve(rhs);
}

FieldSolution solve_frequency(const AssembledOperators &ops, const ControlState &ctrl, Factorization &fact) {
  const ComposedSystem sys = compose_system(ops, ctrl);
  FieldSolution s;
  s.freq = ops.freq;
  s.ctrl = ctrl;
  s.p = solve_state(fact, sys.A, sys.f);
  s.residual = relative_residual(sys.A, s.p, sys.f);
  s.lambda = solve_adjoint(fact, ops.M_Da, s.p);
  const Eigen::VectorXcd rhs = ops.M_Da * s.p;
  s.adjoint_residual = relative_residual(fact.matrix(), s.lambda.conjugate(), rhs.conjugate());
  return s;
}

namespace {

cplx hankel2(int m, double x) { return {std::cyl_bessel_j(m, x), -std::cyl_neumann(m, x)}; }

double bessel_j_prime(int m, double x) {
  if (m == 0) return -std::cyl_bessel_j(1, x);
  return std::cyl_bessel_j(m - 1, x) - m / x * std::cyl_bessel_j(m, x);
}

cplx hankel2_prime(int m, double x) {
  if (m == 0) return -hankel2(1, x);
  return hankel2(m - 1, x) - static_cast<double>(m) / x * hankel2(m, x);
}

}  // namespace

cplx analytic_cylinder_scatter(const FrequencySpec &freq, double r0, Vec2 x, int extra_modes) {
  const double r = norm(x);
  if (r < r0 * (1.0 - 1e-12)) throw Error("analytic_cylinder_scatter: point inside the cylinder");
  const double ka = freq.k0 * r0;
  const double kr = freq.k0 * r;
  const int M = static_cast<int>(std::ceil(ka)) + extra_modes;
  const double phi = std::atan2(x.y, x.x) - std::atan2(freq.direction.y, freq.direction.x);
  cplx sum = 0.0;
  cplx mj = 1.0;  // (-j)^m
  // At least M modes, continued while the terms are still above roundoff.
  for (int m = 0; m <= M + 100; ++m) {
    const double eps = m == 0 ? 1.0 : 2.0;
    const cplx coef = bessel_j_prime(m, ka) / hankel2_prime(m, ka);
    const cplx term = eps * mj * coef * hankel2(m, kr);
    if (m > M && std::abs(term) < 1e-17 * std::max(1.0, std::abs(sum))) break;
    sum -= term * std::cos(m * phi);
    mj *= cplx(0.0, -1.0);
  }
  return sum;
}

FieldEvaluator::FieldEvaluator(const Mesh &mesh) : mesh_(&mesh), locator_(mesh) {}

cplx FieldEvaluator::operator()(const Eigen::VectorXcd &field, Vec2 p) const {
  const auto hit = locator_.locate(p);
  if (!hit) throw Error("field evaluation: point outside the mesh");
  const auto &[t, bc] = *hit;
  const auto phi = p2_shape(bc[0], bc[1], bc[2]);
  const auto &tr = mesh_->triangles[static_cast<std::size_t>(t)];
  cplx v = 0.0;
  for (int i = 0; i < 6; ++i) v += phi[static_cast<std::size_t>(i)] * field[tr[static_cast<std::size_t>(i)]];
  return v;
}

std::optional<Region> FieldEvaluator::region_at(Vec2 p) const {
  const auto hit = locator_.locate(p);
  if (!hit) return std::nullopt;
  return mesh_->region[static_cast<std::size_t>(hit->first)];
}

double IntensityProfile::mean_dB() const {
  double s = 0.0;
  for (double d : delta_dB) s += d;
  return delta_dB.empty() ? 0.0 : s / static_cast<double>(delta_dB.size());
}

IntensityProfile intensity_profile(const FieldEvaluator &eval, const Eigen::VectorXcd &p_s, Vec2 center,
                                   double probe_radius, int n_theta) {
  if (n_theta < 1) throw Error("intensity: n_theta must be positive");
  IntensityProfile prof;
  prof.probe_radius = probe_radius;
  for (int i = 0; i < n_theta; ++i) {
    const double th = 2.0 * std::numbers::pi * i / n_theta;
    const Vec2 x = center + probe_radius * Vec2{std::cos(th), std::sin(th)};
    const auto region = eval.region_at(x);
    if (!region) throw Error("intensity: probe circle leaves the computational domain");
    if (*region != Region::Ambient) throw Error("intensity: probe circle intersects the cloak region");
    const double mag2 = std::norm(eval(p_s, x));
    prof.theta.push_back(th);
    prof.delta_dB.push_back(10.0 * std::log10(std::max(mag2, 1e-300)));
  }
  return prof;
}

IntensityReduction intensity_reduction(const FieldEvaluator &eval, const Eigen::VectorXcd &p_cloaked,
                                       const Eigen::VectorXcd &p_bare, Vec2 center, double probe_radius,
                                       int n_theta) {
  IntensityReduction r;
  r.cloaked = intensity_profile(eval, p_cloaked, center, probe_radius, n_theta);
  r.bare = intensity_profile(eval, p_bare, center, probe_radius, n_theta);
  r.mean_reduction_dB = r.bare.mean_dB() - r.cloaked.mean_dB();
  return r;
}

std::vector<double> smooth_circular(const std::vector<double> &values, int window) {
  if (window < 1 || window % 2 == 0) throw Error("smoothing window must be odd and positive");
  const int n = static_cast<int>(values.size());
  std::vector<double> out(values.size());
  const int h = window / 2;
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int k = -h; k <= h; ++k) s += values[static_cast<std::size_t>(((i + k) % n + n) % n)];
    out[static_cast<std::size_t>(i)] = s / window;
  }
  return out;
}

void write_field(std::ostream &os, const Mesh &mesh, const Eigen::VectorXcd &p) {
  os.precision(17);
  for (std::size_t i = 0; i < mesh.num_nodes(); ++i)
    os << mesh.nodes[i].x << ' ' << mesh.nodes[i].y << ' ' << p[static_cast<Eigen::Index>(i)].real() << ' '
       << p[static_cast<Eigen::Index>(i)].imag() << '\n';
}

void write_intensity(std::ostream &os, const IntensityProfile &profile) {
  os.precision(10);
  for (std::size_t i = 0; i < profile.theta.size(); ++i)
    os << profile.theta[i] * 180.0 / std::numbers::pi << ' ' << profile.delta_dB[i] << '\n';
}

}  // namespace cloak
