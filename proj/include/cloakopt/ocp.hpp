#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "cloakopt/feasible_set.hpp"
#include "cloakopt/scattering.hpp"

namespace cloak {

struct OcpConfig {
  double lambda_v = 1e-6;
  double lambda_u = 1e-6;
  int max_iter = 200;
  double grad_tol = 0.0;
  /// Stop when the gradient norm falls below grad_rtol times its initial value.
  double grad_rtol = 1e-8;
  double armijo_c1 = 1e-4;
  double armijo_shrink = 0.5;
  double tau0 = 1.0;
  int max_halvings = 60;
  bool bb_warm_start = true;
  bool use_laplacian = false;
  std::vector<FrequencySpec> frequencies;

  void validate() const;
};

/// Cell-adjacency graph Laplacian H and the diagonal of cell areas D.
struct LaplacianMatrix {
  RealSparse H;
  Eigen::VectorXd D;

  static LaplacianMatrix build(const CellPartition &part);
  /// D when `with_h` is false, H + D otherwise.
  RealSparse regularizer(bool with_h) const;
};

struct Gradient {
  Eigen::VectorXd gv;
  Eigen::VectorXd gu;
  /// Largest |Im| / max|Re| over the discarded imaginary parts of the
  /// physical terms, reported for diagnostics.
  double imag_ratio = 0.0;

  double norm() const { return std::sqrt(gv.squaredNorm() + gu.squaredNorm()); }
};

/// J = lv/2 v'Rv + lu/2 u'Ru + 1/2 sum_h p_h^H M_Da p_h.
double cost(const ControlState &ctrl, const std::vector<FieldSolution> &sols, const OcpConfig &cfg,
            const LaplacianMatrix &lap, const std::vector<AssembledOperators> &ops);

/// Fully discrete reduced gradient. Throws if any solution was computed at a
/// different control.
Gradient reduced_gradient(const ControlState &ctrl, const std::vector<FieldSolution> &sols,
                          const std::vector<AssembledOperators> &ops, const OcpConfig &cfg,
                          const LaplacianMatrix &lap);
/// Single-threaded reference of reduced_gradient.
Gradient reduced_gradient_serial(const ControlState &ctrl, const std::vector<FieldSolution> &sols,
                                 const std::vector<AssembledOperators> &ops, const OcpConfig &cfg,
                                 const LaplacianMatrix &lap);

/// Replaces every (v_k, u_k) by its nearest point in the control set.
/// Returns the number of pairs that moved.
int project_controls(ControlState &ctrl, const ControlSet &set);

/// Gradient step followed by pairwise projection.
ControlState projected_update(const ControlState &ctrl, const Gradient &g, double tau, const ControlSet &set,
                              int *n_projected = nullptr);

using ObjectiveFn = std::function<std::optional<double>(const ControlState &)>;

struct ArmijoResult {
  double tau = 0.0;
  int trials = 0;
  double J = 0.0;
  ControlState ctrl;
  int n_projected = 0;
  /// g . (x_new - x), the model decrease used in the acceptance test.
  double slope = 0.0;
};

/// Largest tau = tau0 * shrink^n with J(x_tau) <= J(x) + c1 g.(x_tau - x),
/// where x_tau = P(x - tau g) and P is the identity without a set. Objective
/// failures (nullopt) count as rejected trials. Throws after max_halvings.
ArmijoResult armijo_backtracking(const ObjectiveFn &J, const ControlState &ctrl, double J0, const Gradient &g,
                                 const OcpConfig &cfg, double tau0, const ControlSet *set = nullptr);

/// Assembled operators for every frequency plus the cell structure.
class OcpProblem {
 public:
  OcpProblem(std::vector<AssembledOperators> ops, const CellPartition &part, OcpConfig cfg);

  struct Evaluation {
    ControlState ctrl;
    std::vector<FieldSolution> sols;
    std::vector<Factorization> facts;
    double J = 0.0;
    bool adjoint = false;
  };

  /// State solves at ctrl (all frequencies). Throws SolverError on failure.
  Evaluation evaluate(const ControlState &ctrl) const;
  /// Adjoint solves reusing the stored factorizations.
  void solve_adjoints(Evaluation &ev) const;
  Gradient gradient(Evaluation &ev) const;

  std::size_t num_cells() const { return num_cells_; }
  const std::vector<AssembledOperators> &ops() const { return ops_; }
  const OcpConfig &config() const { return cfg_; }
  const LaplacianMatrix &laplacian() const { return lap_; }

 private:
  std::vector<AssembledOperators> ops_;
  OcpConfig cfg_;
  LaplacianMatrix lap_;
  std::size_t num_cells_ = 0;
};

struct TraceEntry {
  int iter = 0;
  double J = 0.0;
  double J_prev = 0.0;
  double grad_norm = 0.0;
  double tau = 0.0;
  int n_projected = 0;
  int trials = 0;
  double slope = 0.0;
};

struct OptimizationTrace {
  std::vector<TraceEntry> entries;
  std::vector<std::vector<char>> projected_flags;

  /// True when every accepted step satisfies the sufficient-decrease test.
  bool armijo_replay_ok(double c1, std::string *why = nullptr) const;
};

struct OcpResult {
  ControlState ctrl;
  double J = 0.0;
  double J0 = 0.0;
  int iterations = 0;
  std::string stop_reason;
  OptimizationTrace trace;
  std::vector<FieldSolution> sols;
};

using IterationCallback = std::function<void(const TraceEntry &)>;

/// Steepest descent with Armijo backtracking, optionally projected onto a set.
OcpResult steepest_descent(const OcpProblem &problem, const ControlState &initial, const ControlSet *set = nullptr,
                           const IterationCallback &callback = {});

void write_trace(std::ostream &os, const OptimizationTrace &trace);
void write_controls(std::ostream &os, const ControlState &ctrl);

}  // namespace cloak
