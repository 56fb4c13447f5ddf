#pragma once

#include <complex>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "cloakopt/mesh.hpp"

namespace cloak {

using cplx = std::complex<double>;
using RealSparse = Eigen::SparseMatrix<double>;
using ComplexSparse = Eigen::SparseMatrix<cplx>;

struct BackgroundMedium {
  double rho0 = 998.0;
  double kappa0 = 2.2e6;

  double a0() const { return 1.0 / rho0; }
  double b0() const { return 1.0 / kappa0; }
  double c0() const { return std::sqrt(kappa0 / rho0); }
  void validate() const;
};

struct FrequencySpec {
  double omega = 0.0;
  Vec2 direction{1.0, 0.0};
  double k0 = 0.0;

  static FrequencySpec from_omega(double omega, Vec2 direction, const BackgroundMedium &medium);
  static FrequencySpec from_wavelength(double wavelength, Vec2 direction, const BackgroundMedium &medium);
  double wavelength() const;
  void validate() const;
};

struct IncidentValue {
  cplx p;
  cplx dx;
  cplx dy;
};

/// Plane wave exp(-j k0 a.x) and its gradient.
IncidentValue incident_field(const FrequencySpec &freq, Vec2 x);

/// Per-cell operator pieces. Entries are stored on the cell's local dof list
/// in the sparsity of the elements that make up the cell.
struct CellBlock {
  std::vector<int> dofs;
  std::vector<int> row;  // local indices into dofs
  std::vector<int> col;
  std::vector<double> a;  // A_k entries
  std::vector<double> b;  // B_k entries
  std::vector<int> pos;   // index into the value array of the composed matrix
  Eigen::VectorXcd l;     // sign carried so that f is a plain sum
  Eigen::VectorXcd d;
};

struct ControlState {
  Eigen::VectorXd v;
  Eigen::VectorXd u;

  static ControlState zeros(std::size_t n) { return {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)),
                                                    Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))}; }
  std::size_t size() const { return static_cast<std::size_t>(v.size()); }
  bool operator==(const ControlState &o) const { return v == o.v && u == o.u; }
};

/// Constant operators for one frequency. A0, B0, M_Da are real; C and the
/// load vectors are complex.
struct AssembledOperators {
  std::size_t ndof = 0;
  RealSparse A0;
  RealSparse B0;
  RealSparse M_Da;
  ComplexSparse C;
  Eigen::VectorXcd q;
  std::vector<CellBlock> cells;
  FrequencySpec freq;

  /// A0 + B0 + C on the union sparsity of every operator.
  ComplexSparse base;

  /// Dense-on-cell product (A_k x) restricted to the cell's dofs.
  Eigen::VectorXcd apply_Ak(std::size_t k, const Eigen::VectorXcd &x) const;
  Eigen::VectorXcd apply_Bk(std::size_t k, const Eigen::VectorXcd &x) const;
  /// Global sparse copies of A_k and B_k (tests and export only).
  RealSparse global_Ak(std::size_t k) const;
  RealSparse global_Bk(std::size_t k) const;
};

/// Local P2 stiffness and mass on the triangle with vertices p0, p1, p2.
struct ElementMatrices {
  Eigen::Matrix<double, 6, 6> K;
  Eigen::Matrix<double, 6, 6> M;
};
ElementMatrices p2_element(Vec2 p0, Vec2 p1, Vec2 p2);

/// P2 shape function values at barycentric coordinates (l0, l1, l2).
std::array<double, 6> p2_shape(double l0, double l1, double l2);

AssembledOperators assemble_constants(const Mesh &mesh, const CellPartition &part, const BackgroundMedium &medium,
                                      const FrequencySpec &freq);
/// Single-threaded reference with identical arithmetic.
AssembledOperators assemble_constants_serial(const Mesh &mesh, const CellPartition &part,
                                             const BackgroundMedium &medium, const FrequencySpec &freq);

struct ComposedSystem {
  ComplexSparse A;
  Eigen::VectorXcd f;
};
ComposedSystem compose_system(const AssembledOperators &ops, const ControlState &ctrl);

/// Coordinate export: one `row col re im` line per stored entry.
void write_matrix(std::ostream &os, const ComplexSparse &A);

}  // namespace cloak
