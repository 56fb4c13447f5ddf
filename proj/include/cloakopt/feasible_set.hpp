#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "cloakopt/geometry.hpp"

namespace cloak {

enum class Family { Cylinder, Star };

const char *family_name(Family f);
Family parse_family(const std::string &s);

/// Weighted phase densities. Fractions must sum to one within 1e-9.
double rule_of_mixtures(const std::vector<std::pair<double, double>> &fractions_and_densities);

double kappa_from_phase_speed(double c_ph, double rho_hom);

/// Material constants used by the cell geometry formulas and the synthetic
/// table generator.
struct PhaseData {
  double rho_water = 998.0;
  double rho_air = 1.23;
  double rho_solid = 2700.0;
  double kappa_water = 2.2e9;
  double young_solid = 70e9;
  double poisson_solid = 0.3;
};

/// Hollow cylinder with an air core, dimensions relative to the hexagon edge.
struct CellGeometryCylinder {
  double r_in_hat = 0.0;
  double r_out_hat = 0.0;
};

/// N-pointed star shell with valley radius p_hat and tip radius P_hat.
struct CellGeometryStar {
  double p_hat = 0.0;
  double P_hat = 0.0;
  int n_points = 12;
};

struct CylinderConstraints {
  double delta_r2 = 0.05;
  double delta_r1 = 0.2;
  void validate() const;
  bool admits(const CellGeometryCylinder &g, double tol = 1e-12) const;
  /// Map of the unit square onto the constraint triangle.
  CellGeometryCylinder from_logical(double s, double t) const;
};

struct StarConstraints {
  double p_min = 0.0;
  double P_max = 0.0;
  int n_points = 12;
  double fillet = 0.025;
  double wall = 0.05;
  void validate() const;
  bool admits(const CellGeometryStar &g, double tol = 1e-12) const;
  CellGeometryStar from_logical(double s, double t) const;
};

/// Area of the regular hexagon with unit edge.
double hexagon_cell_area();

/// Homogenized density of one cell, normalized by the water density.
double cylinder_rho_hat(const CellGeometryCylinder &g, const PhaseData &ph = {});
double star_rho_hat(const CellGeometryStar &g, double wall, const PhaseData &ph = {});
/// Area of the star shell material region and of its air core.
std::pair<double, double> star_areas(const CellGeometryStar &g, double wall);

/// Samples (rho_hat, kappa_hat, c_ph/c0) on an n1 x n2 logical grid.
struct HomogenizationTable {
  Family family = Family::Cylinder;
  int n1 = 0;
  int n2 = 0;
  struct Row {
    double param1, param2, rho_hat, kappa_hat, c_ratio;
  };
  std::vector<Row> rows;  // index i * n2 + j, logical s = i/(n1-1), t = j/(n2-1)

  const Row &at(int i, int j) const { return rows[static_cast<std::size_t>(i * n2 + j)]; }
  void validate() const;
  /// Bilinear interpolation in logical coordinates (s, t) in [0,1]^2.
  Row interpolate(double s, double t) const;
};

/// Synthetic effective-medium tables standing in for dispersion data.
HomogenizationTable synthetic_cylinder_table(const CylinderConstraints &c, int n1, int n2, const PhaseData &ph = {});
HomogenizationTable synthetic_star_table(const StarConstraints &c, int n1, int n2, const PhaseData &ph = {});

void write_table(std::ostream &os, const HomogenizationTable &t);
HomogenizationTable read_table(std::istream &is);

/// Reachable region stored as closed loops in (ln rho_hat, ln kappa_hat);
/// membership uses the even-odd rule over all loops. A loop of one vertex
/// is a degenerate single-point set.
struct FeasibleSet {
  std::vector<std::vector<Vec2>> loops;  // (rho_hat, kappa_hat)
  std::vector<std::vector<Family>> tags;

  bool empty() const { return loops.empty(); }
  bool contains(double rho_hat, double kappa_hat, double tol = 1e-9) const;
  void validate() const;
};

/// Closed loops of admissible (v, u) = (ln rho_hat, ln kappa_hat).
class ControlSet {
 public:
  ControlSet() = default;
  explicit ControlSet(std::vector<std::vector<Vec2>> loops);

  const std::vector<std::vector<Vec2>> &loops() const { return loops_; }
  bool contains(Vec2 vu, double tol = 1e-9) const;
  /// Nearest point of the set; points inside are returned unchanged.
  Vec2 project(Vec2 vu) const;
  double boundary_distance(Vec2 vu) const;

 private:
  std::vector<std::vector<Vec2>> loops_;
};

ControlSet to_control_space(const FeasibleSet &set);
FeasibleSet from_control_space(const ControlSet &set);

/// Traces the image of the constraint boundary for one table.
FeasibleSet trace_feasible_boundary(const HomogenizationTable &table);
/// Union of several traced sets, computed in control space.
FeasibleSet union_sets(const std::vector<FeasibleSet> &sets);

void write_feasible_set(std::ostream &os, const FeasibleSet &set);
FeasibleSet read_feasible_set(std::istream &is);

struct InversionResult {
  Family family = Family::Cylinder;
  double param1 = 0.0;
  double param2 = 0.0;
  double s = 0.0;
  double t = 0.0;
  double rho_hat = 0.0;
  double kappa_hat = 0.0;
  double residual = 0.0;
};

/// Geometry whose interpolated properties match the target. Throws when the
/// target is farther than 1e-3 from the hull of every table.
InversionResult invert_cell(Vec2 target, const std::vector<HomogenizationTable> &tables);

}  // namespace cloak
