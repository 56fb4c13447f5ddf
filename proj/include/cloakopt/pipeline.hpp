#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cloakopt/feasible_set.hpp"
#include "cloakopt/ocp.hpp"

namespace cloak {

/// Closed polyline file: one `x y` pair per line, `#` starts a comment.
Contour read_polyline(std::istream &is);
void write_polyline(std::ostream &os, const Contour &c);

/// Everything a run needs, resolved from a JSON configuration file. Relative
/// paths in the file are taken relative to the file's directory.
struct RunConfig {
  std::filesystem::path source;
  std::string name;
  DomainSpec domain;
  BackgroundMedium medium;
  MeshOptions mesh;
  OcpConfig ocp;
  /// Empty for an unconstrained run.
  std::filesystem::path feasible_set;
  std::vector<std::filesystem::path> tables;
  Vec2 probe_center{0.0, 0.0};
  double probe_radius = 0.0;
  int n_theta = 360;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  /// Initial controls are uniform in [-a, a] per cell (zero by default).
  double initial_amplitude = 0.0;
  /// Hex digest of the configuration file bytes.
  std::string hash;

  bool constrained() const { return !feasible_set.empty(); }
  /// Throws cloak::Error naming the offending key.
  void validate() const;
};

RunConfig parse_run_config(const std::string &text, const std::filesystem::path &base_dir);
RunConfig load_run_config(const std::filesystem::path &path);

/// Mesh, partition and assembled operators for every configured frequency.
struct Workspace {
  std::vector<Hexagon> hexes;
  Mesh mesh;
  CellPartition part;
  std::vector<AssembledOperators> ops;
};

Workspace prepare_workspace(const RunConfig &cfg, bool assemble = true);

ControlSet load_control_set(const std::filesystem::path &path);
ControlState initial_controls(const RunConfig &cfg, std::size_t num_cells);

struct RunSummary {
  OcpResult result;
  /// Per frequency, cloaked vs bare intensity on the probe circle.
  std::vector<IntensityReduction> reductions;
  std::vector<Eigen::VectorXcd> bare_fields;
  /// Final (e^v, e^u) pairs outside the feasible set.
  int feasibility_violations = 0;
};

/// Runs the optimizer with the configured set and evaluates the reduction
/// against the bare obstacle on the probe circle.
RunSummary run_optimization(const RunConfig &cfg, const Workspace &ws, const IterationCallback &callback = {});

/// Number of cells whose (e^v, e^u) lies outside the set (tolerance 1e-9).
int count_violations(const ControlState &ctrl, const FeasibleSet &set);

ControlState read_controls(std::istream &is);

struct CommandOptions {
  std::string command;
  std::filesystem::path config;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

/// Runs one command and writes its artifacts and manifest entry. Returns the
/// process exit status; errors are reported on `err`.
int run_command(const CommandOptions &opts, std::ostream &log, std::ostream &err);

/// SHA-256 of a file's contents as lowercase hex.
std::string file_sha256(const std::filesystem::path &path);

extern const char *const kToolVersion;

}  // namespace cloak
