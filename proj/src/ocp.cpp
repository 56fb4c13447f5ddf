#include "cloakopt/ocp.hpp"

#include <cmath>
#include <exception>
#include <limits>
#include <ostream>
#include <sstream>

#include "cloakopt/error.hpp"

namespace cloak {

void OcpConfig::validate() const {
  if (!(lambda_v >= 0.0) || !(lambda_u >= 0.0)) throw Error("ocp: lambda_v and lambda_u must be >= 0");
  if (!(armijo_shrink > 0.0 && armijo_shrink < 1.0)) throw Error("ocp: armijo_shrink must lie in (0,1)");
  if (!(armijo_c1 > 0.0 && armijo_c1 < 1.0)) throw Error("ocp: armijo_c1 must lie in (0,1)");
  if (!(tau0 > 0.0)) throw Error("ocp: tau0 must be positive");
  if (max_iter < 0) throw Error("ocp: max_iter must be >= 0");
  if (!(grad_tol >= 0.0) || !(grad_rtol >= 0.0)) throw Error("ocp: gradient tolerances must be >= 0");
  if (max_halvings < 1) throw Error("ocp: max_halvings must be >= 1");
}

LaplacianMatrix LaplacianMatrix::build(const CellPartition &part) {
  const auto n = static_cast<Eigen::Index>(part.num_cells);
  std::vector<Eigen::Triplet<double>> t;
  for (std::size_t k = 0; k < part.num_cells; ++k) {
    t.emplace_back(static_cast<int>(k), static_cast<int>(k), static_cast<double>(part.adjacency[k].size()));
    for (int j : part.adjacency[k]) t.emplace_back(static_cast<int>(k), j, -1.0);
  }
  LaplacianMatrix L;
  L.H.resize(n, n);
  L.H.setFromTriplets(t.begin(), t.end());
  L.D = Eigen::Map<const Eigen::VectorXd>(part.areas.data(), n);
  return L;
}

RealSparse LaplacianMatrix::regularizer(bool with_h) const {
  RealSparse D_sp(D.size(), D.size());
  std::vector<Eigen::Triplet<double>> t;
  for (Eigen::Index i = 0; i < D.size(); ++i) t.emplace_back(static_cast<int>(i), static_cast<int>(i), D[i]);
  D_sp.setFromTriplets(t.begin(), t.end());
  if (!with_h) return D_sp;
  return H + D_sp;
}

namespace {

void check_consistent(const ControlState &ctrl, const std::vector<FieldSolution> &sols,
                      const std::vector<AssembledOperators> &ops, bool need_adjoint) {
  if (sols.size() != ops.size()) throw Error("ocp: one field solution per frequency is required");
  for (const AssembledOperators &o : ops)
    if (o.cells.size() != ctrl.size() || ctrl.u.size() != ctrl.v.size())
      throw Error("ocp: control dimension does not match the number of cells");
  for (const FieldSolution &s : sols) {
    if (!(s.ctrl == ctrl)) throw Error("ocp: stale field solution (controls changed since the solve)");
    if (need_adjoint && s.lambda.size() != s.p.size())
      throw Error("ocp: adjoint not solved for the current controls");
  }
}

struct CellTerms {
  double v = 0.0, u = 0.0, imag = 0.0, real = 0.0;
};

CellTerms cell_terms(std::size_t k, const ControlState &ctrl, const std::vector<FieldSolution> &sols,
                     const std::vector<AssembledOperators> &ops) {
  CellTerms out;
  const auto ek = static_cast<Eigen::Index>(k);
  for (std::size_t h = 0; h < ops.size(); ++h) {
    const CellBlock &cb = ops[h].cells[k];
    const Eigen::VectorXcd &p = sols[h].p;
    const Eigen::VectorXcd &lam = sols[h].lambda;
    cplx tv = 0.0, tu = 0.0;
    for (std::size_t e = 0; e < cb.a.size(); ++e) {
      const cplx lp = std::conj(lam[cb.dofs[static_cast<std::size_t>(cb.row[e])]]) *
                      p[cb.dofs[static_cast<std::size_t>(cb.col[e])]];
      tv += cb.a[e] * lp;
      tu += cb.b[e] * lp;
    }
    for (std::size_t i = 0; i < cb.dofs.size(); ++i) {
      const cplx cl = std::conj(lam[cb.dofs[i]]);
      tv -= cl * cb.l[static_cast<Eigen::Index>(i)];
      tu -= cl * cb.d[static_cast<Eigen::Index>(i)];
    }
    const double ev = std::exp(-ctrl.v[ek]), eu = std::exp(-ctrl.u[ek]);
    out.v += ev * tv.real();
    out.u += eu * tu.real();
    out.imag = std::max({out.imag, std::abs(ev * tv.imag()), std::abs(eu * tu.imag())});
    out.real = std::max({out.real, std::abs(ev * tv.real()), std::abs(eu * tu.real())});
  }
  return out;
}

Gradient finish(const ControlState &ctrl, const std::vector<CellTerms> &terms, const OcpConfig &cfg,
                const LaplacianMatrix &lap) {
  const RealSparse R = lap.regularizer(cfg.use_laplacian);
  Gradient g;
  g.gv = cfg.lambda_v * (R * ctrl.v);
  g.gu = cfg.lambda_u * (R * ctrl.u);
  double imag = 0.0, real = 0.0;
  for (std::size_t k = 0; k < terms.size(); ++k) {
    g.gv[static_cast<Eigen::Index>(k)] += terms[k].v;
    g.gu[static_cast<Eigen::Index>(k)] += terms[k].u;
    imag = std::max(imag, terms[k].imag);
    real = std::max(real, terms[k].real);
  }
  g.imag_ratio = real > 0.0 ? imag / real : 0.0;
  return g;
}

}  // namespace

double cost(const ControlState &ctrl, const std::vector<FieldSolution> &sols, const OcpConfig &cfg,
            const LaplacianMatrix &lap, const std::vector<AssembledOperators> &ops) {
  check_consistent(ctrl, sols, ops, false);
  const RealSparse R = lap.regularizer(cfg.use_laplacian);
  double J = 0.5 * cfg.lambda_v * ctrl.v.dot(R * ctrl.v) + 0.5 * cfg.lambda_u * ctrl.u.dot(R * ctrl.u);
  for (std::size_t h = 0; h < sols.size(); ++h)
    J += 0.5 * sols[h].p.dot(ops[h].M_Da * sols[h].p).real();
  return J;
}

Gradient reduced_gradient(const ControlState &ctrl, const std::vector<FieldSolution> &sols,
                          const std::vector<AssembledOperators> &ops, const OcpConfig &cfg,
                          const LaplacianMatrix &lap) {
  check_consistent(ctrl, sols, ops, true);
  const auto nc = static_cast<std::ptrdiff_t>(ctrl.size());
  std::vector<CellTerms> terms(ctrl.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < nc; ++k)
    terms[static_cast<std::size_t>(k)] = cell_terms(static_cast<std::size_t>(k), ctrl, sols, ops);
  return finish(ctrl, terms, cfg, lap);
}

Gradient reduced_gradient_serial(const ControlState &ctrl, const std::vector<FieldSolution> &sols,
                                 const std::vector<AssembledOperators> &ops, const OcpConfig &cfg,
                                 const LaplacianMatrix &lap) {
  check_consistent(ctrl, sols, ops, true);
  std::vector<CellTerms> terms(ctrl.size());
  for (std::size_t k = 0; k < ctrl.size(); ++k) terms[k] = cell_terms(k, ctrl, sols, ops);
  return finish(ctrl, terms, cfg, lap);
}

int project_controls(ControlState &ctrl, const ControlSet &set) {
  int moved = 0;
  for (Eigen::Index k = 0; k < ctrl.v.size(); ++k) {
    const Vec2 p{ctrl.v[k], ctrl.u[k]};
    const Vec2 q = set.project(p);
    if (!(q == p)) {
      ++moved;
      ctrl.v[k] = q.x;
      ctrl.u[k] = q.y;
    }
  }
  return moved;
}

ControlState projected_update(const ControlState &ctrl, const Gradient &g, double tau, const ControlSet &set,
                              int *n_projected) {
  ControlState next{ctrl.v - tau * g.gv, ctrl.u - tau * g.gu};
  const int moved = project_controls(next, set);
  if (n_projected) *n_projected = moved;
  return next;
}

ArmijoResult armijo_backtracking(const ObjectiveFn &J, const ControlState &ctrl, double J0, const Gradient &g,
                                 const OcpConfig &cfg, double tau0, const ControlSet *set) {
  ArmijoResult r;
  r.ctrl = ctrl;
  r.J = J0;
  if (g.gv.squaredNorm() + g.gu.squaredNorm() == 0.0) return r;
  double tau = tau0;
  for (int n = 0; n <= cfg.max_halvings; ++n, tau *= cfg.armijo_shrink) {
    int moved = 0;
    ControlState trial = set ? projected_update(ctrl, g, tau, *set, &moved)
                             : ControlState{ctrl.v - tau * g.gv, ctrl.u - tau * g.gu};
    const double slope = g.gv.dot(trial.v - ctrl.v) + g.gu.dot(trial.u - ctrl.u);
    ++r.trials;
    const std::optional<double> Jt = J(trial);
    if (Jt && std::isfinite(*Jt) && *Jt <= J0 + cfg.armijo_c1 * slope) {
      r.tau = tau;
      r.J = *Jt;
      r.ctrl = std::move(trial);
      r.n_projected = moved;
      r.slope = slope;
      return r;
    }
  }
  std::ostringstream msg;
  msg << "armijo: no sufficient decrease after " << cfg.max_halvings
      << " halvings (gradient or tolerance inconsistent)";
  throw Error(msg.str());
}

OcpProblem::OcpProblem(std::vector<AssembledOperators> ops, const CellPartition &part, OcpConfig cfg)
    : ops_(std::move(ops)), cfg_(std::move(cfg)), lap_(LaplacianMatrix::build(part)), num_cells_(part.num_cells) {
  cfg_.validate();
  if (ops_.empty()) throw Error("ocp: at least one frequency is required");
  for (const auto &o : ops_)
    if (o.cells.size() != num_cells_) throw Error("ocp: operators and partition disagree on the cell count");
}

OcpProblem::Evaluation OcpProblem::evaluate(const ControlState &ctrl) const {
  Evaluation ev;
  ev.ctrl = ctrl;
  ev.sols.resize(ops_.size());
  ev.facts.resize(ops_.size());
  std::vector<std::exception_ptr> errors(ops_.size());
  const auto nf = static_cast<std::ptrdiff_t>(ops_.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t h = 0; h < nf; ++h) {
    const auto uh = static_cast<std::size_t>(h);
    try {
      const ComposedSystem sys = compose_system(ops_[uh], ctrl);
      FieldSolution &s = ev.sols[uh];
      s.freq = ops_[uh].freq;
      s.ctrl = ctrl;
      s.p = solve_state(ev.facts[uh], sys.A, sys.f);
      s.residual = relative_residual(sys.A, s.p, sys.f);
    } catch (...) {
      errors[uh] = std::current_exception();
    }
  }
  for (const auto &e : errors)
    if (e) std::rethrow_exception(e);
  ev.J = cost(ctrl, ev.sols, cfg_, lap_, ops_);
  return ev;
}

void OcpProblem::solve_adjoints(Evaluation &ev) const {
  if (ev.adjoint) return;
  std::vector<std::exception_ptr> errors(ops_.size());
  const auto nf = static_cast<std::ptrdiff_t>(ops_.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t h = 0; h < nf; ++h) {
    const auto uh = static_cast<std::size_t>(h);
    try {
      FieldSolution &s = ev.sols[uh];
      s.lambda = solve_adjoint(ev.facts[uh], ops_[uh].M_Da, s.p);
      const Eigen::VectorXcd rhs = ops_[uh].M_Da * s.p;
      s.adjoint_residual = relative_residual(ev.facts[uh].matrix(), s.lambda.conjugate(), rhs.conjugate());
    } catch (...) {
      errors[uh] = std::current_exception();
    }
  }
  for (const auto &e : errors)
    if (e) std::rethrow_exception(e);
  ev.adjoint = true;
}

Gradient OcpProblem::gradient(Evaluation &ev) const {
  solve_adjoints(ev);
  return reduced_gradient(ev.ctrl, ev.sols, ops_, cfg_, lap_);
}

bool OptimizationTrace::armijo_replay_ok(double c1, std::string *why) const {
  for (std::size_t i = 1; i < entries.size(); ++i) {
    const TraceEntry &e = entries[i];
    if (!(e.J <= e.J_prev + c1 * e.slope) || !(e.slope < 0.0) || !(e.J < e.J_prev)) {
      if (why) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "iteration " << e.iter << ": J=" << e.J << " J_prev=" << e.J_prev << " slope=" << e.slope;
        *why = msg.str();
      }
      return false;
    }
  }
  return true;
}

OcpResult steepest_descent(const OcpProblem &problem, const ControlState &initial, const ControlSet *set,
                           const IterationCallback &callback) {
  const OcpConfig &cfg = problem.config();
  if (initial.size() != problem.num_cells()) throw Error("ocp: initial control has the wrong length");
  OcpResult res;
  ControlState start = initial;
  if (set) project_controls(start, *set);
  OcpProblem::Evaluation ev = problem.evaluate(start);
  if (!std::isfinite(ev.J)) throw Error("ocp: non-finite cost at the initial controls");
  res.J0 = ev.J;
  res.trace.entries.push_back({0, ev.J, ev.J, 0.0, 0.0, 0, 0, 0.0});
  res.trace.projected_flags.emplace_back(problem.num_cells(), 0);

  std::optional<OcpProblem::Evaluation> last_trial;
  const ObjectiveFn J = [&](const ControlState &c) -> std::optional<double> {
    try {
      OcpProblem::Evaluation e = problem.evaluate(c);
      if (!std::isfinite(e.J)) return std::nullopt;
      const double value = e.J;
      last_trial = std::move(e);
      return value;
    } catch (const SolverError &) {
      return std::nullopt;
    }
  };

  Gradient g_prev;
  ControlState x_prev;
  bool have_prev = false;
  double tau_init = cfg.tau0;
  double g0 = 0.0;
  res.stop_reason = "max_iter";
  for (int it = 1; it <= cfg.max_iter + 1; ++it) {
    const Gradient g = problem.gradient(ev);
    const double gn = g.norm();
    if (!std::isfinite(gn)) throw Error("ocp: non-finite gradient");
    if (it == 1) {
      g0 = gn;
      res.trace.entries.front().grad_norm = gn;
    }
    if (it > cfg.max_iter) break;
    if (!(gn >= cfg.grad_tol) || gn <= cfg.grad_rtol * g0) {
      res.stop_reason = "gradient tolerance";
      break;
    }
    if (cfg.bb_warm_start && have_prev) {
      const Eigen::VectorXd sv = ev.ctrl.v - x_prev.v, su = ev.ctrl.u - x_prev.u;
      const double sy = sv.dot(g.gv - g_prev.gv) + su.dot(g.gu - g_prev.gu);
      const double ss = sv.squaredNorm() + su.squaredNorm();
      if (sy > 0.0 && std::isfinite(ss / sy)) tau_init = ss / sy;
      else tau_init = res.trace.entries.back().tau / cfg.armijo_shrink;
    }
    last_trial.reset();
    ArmijoResult ar;
    try {
      ar = armijo_backtracking(J, ev.ctrl, ev.J, g, cfg, tau_init, set);
    } catch (const Error &e) {
      res.stop_reason = std::string("line search failed: ") + e.what();
      break;
    }
    if (ar.trials == 0 || ar.ctrl == ev.ctrl) {
      res.stop_reason = "zero step";
      break;
    }
    std::vector<char> flags(problem.num_cells(), 0);
    if (set) {
      const Eigen::VectorXd rv = ev.ctrl.v - ar.tau * g.gv, ru = ev.ctrl.u - ar.tau * g.gu;
      for (std::size_t k = 0; k < flags.size(); ++k)
        flags[k] = rv[static_cast<Eigen::Index>(k)] != ar.ctrl.v[static_cast<Eigen::Index>(k)] ||
                   ru[static_cast<Eigen::Index>(k)] != ar.ctrl.u[static_cast<Eigen::Index>(k)];
    }
    x_prev = ev.ctrl;
    g_prev = g;
    have_prev = true;
    const double J_prev = ev.J;
    ev = std::move(*last_trial);
    const TraceEntry entry{it, ev.J, J_prev, gn, ar.tau, ar.n_projected, ar.trials, ar.slope};
    res.trace.entries.push_back(entry);
    res.trace.projected_flags.push_back(std::move(flags));
    res.iterations = it;
    if (callback) callback(entry);
  }
  problem.solve_adjoints(ev);
  res.ctrl = ev.ctrl;
  res.J = ev.J;
  res.sols = std::move(ev.sols);
  return res;
}

void write_trace(std::ostream &os, const OptimizationTrace &trace) {
  os.precision(17);
  os << "# iter J grad_norm tau n_projected\n";
  for (const TraceEntry &e : trace.entries)
    os << e.iter << ' ' << e.J << ' ' << e.grad_norm << ' ' << e.tau << ' ' << e.n_projected << '\n';
}

void write_controls(std::ostream &os, const ControlState &ctrl) {
  os.precision(17);
  for (Eigen::Index k = 0; k < ctrl.v.size(); ++k)
    os << k << ' ' << ctrl.v[k] << ' ' << ctrl.u[k] << ' ' << std::exp(ctrl.v[k]) << ' ' << std::exp(ctrl.u[k])
       << '\n';
}

}  // namespace cloak
