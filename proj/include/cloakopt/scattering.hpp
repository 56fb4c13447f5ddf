#pragma once

#include <iosfwd>
#include <memory>
#include <vector>

#include "cloakopt/fem.hpp"

namespace cloak {

/// Sparse LU of a complex symmetric system matrix. The symbolic analysis is
/// kept across refactorizations with an unchanged sparsity pattern.
class Factorization {
 public:
  Factorization();
  ~Factorization();
  Factorization(Factorization &&) noexcept;
  Factorization &operator=(Factorization &&) noexcept;

  /// Throws SolverError if the matrix is singular.
  void factorize(const ComplexSparse &A);
  bool ready() const;
  /// Solve A x = b with one step of iterative refinement if needed.
  Eigen::VectorXcd solve(const Eigen::VectorXcd &b) const;
  const ComplexSparse &matrix() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Relative residual ||A x - b|| / ||b|| (zero when b = 0 and x = 0).
double relative_residual(const ComplexSparse &A, const Eigen::VectorXcd &x, const Eigen::VectorXcd &b);

struct FieldSolution {
  Eigen::VectorXcd p;
  Eigen::VectorXcd lambda;
  FrequencySpec freq;
  ControlState ctrl;
  double residual = 0.0;
  double adjoint_residual = 0.0;
};

/// Factorizes A, solves A p = f and checks the residual against 1e-10.
Eigen::VectorXcd solve_state(Factorization &fact, const ComplexSparse &A, const Eigen::VectorXcd &f);

/// conj(A^-1 conj(M p)) using the state factorization, since A is symmetric.
Eigen::VectorXcd solve_adjoint(const Factorization &fact, const RealSparse &M_Da, const Eigen::VectorXcd &p);

/// Independent factorization of conj(A) for checking solve_adjoint.
Eigen::VectorXcd solve_adjoint_direct(const ComplexSparse &A, const RealSparse &M_Da, const Eigen::VectorXcd &p);

/// Compose, factorize, solve state and adjoint for one frequency.
FieldSolution solve_frequency(const AssembledOperators &ops, const ControlState &ctrl, Factorization &fact);

/// Scattered field of a plane wave on a rigid circular cylinder of radius r0
/// centered at the origin. The series keeps at least ceil(k0 r0) + extra_modes
/// modes and continues until the terms drop below roundoff. Throws if |x| < r0.
cplx analytic_cylinder_scatter(const FrequencySpec &freq, double r0, Vec2 x, int extra_modes = 12);

/// Evaluates a P2 nodal field at arbitrary points of the mesh.
class FieldEvaluator {
 public:
  explicit FieldEvaluator(const Mesh &mesh);
  /// Throws if p is outside the mesh.
  cplx operator()(const Eigen::VectorXcd &field, Vec2 p) const;
  /// Region of the triangle containing p, or nullopt when outside the mesh.
  std::optional<Region> region_at(Vec2 p) const;

 private:
  const Mesh *mesh_;
  PointLocator locator_;
};

struct IntensityProfile {
  std::vector<double> theta;
  std::vector<double> delta_dB;
  double probe_radius = 0.0;

  double mean_dB() const;
};

/// Delta(theta) = 10 log10(|p_s|^2 / |p_inc|^2) for a unit incident amplitude,
/// sampled at n_theta points on a circle around `center`. The circle must lie
/// in the ambient region.
IntensityProfile intensity_profile(const FieldEvaluator &eval, const Eigen::VectorXcd &p_s, Vec2 center,
                                   double probe_radius, int n_theta);

struct IntensityReduction {
  IntensityProfile cloaked;
  IntensityProfile bare;
  /// Mean of Delta_bare minus mean of Delta_cloaked, in dB.
  double mean_reduction_dB = 0.0;
};

IntensityReduction intensity_reduction(const FieldEvaluator &eval, const Eigen::VectorXcd &p_cloaked,
                                       const Eigen::VectorXcd &p_bare, Vec2 center, double probe_radius,
                                       int n_theta);

/// Circular moving average over `window` samples (odd, >= 1).
std::vector<double> smooth_circular(const std::vector<double> &values, int window);

void write_field(std::ostream &os, const Mesh &mesh, const Eigen::VectorXcd &p);
void write_intensity(std::ostream &os, const IntensityProfile &profile);

}  // namespace cloak
