// netmfg: command-line front end for the network MFG solvers.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "netmfg/netmfg.hpp"

namespace fs = std::filesystem;
using namespace netmfg;

namespace {

struct Options {
  std::string problem;
  std::string out;
  std::optional<double> h_target, tol, damping, samples, tv_tol;
  std::optional<int> max_iters;
  std::optional<std::uint64_t> seed;
  std::string against;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("problem", o.problem, "problem file (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--h-target", o.h_target, "target mesh width");
  cmd->add_option("--tol", o.tol, "fixed-point tolerance");
  cmd->add_option("--damping", o.damping, "Picard damping in (0,1]");
  cmd->add_option("--max-iters", o.max_iters, "maximum outer iterations");
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--samples", o.samples, "Monte Carlo samples");
}

ProblemSpec load(const Options& o) {
  ProblemSpec p = load_problem(o.problem);
  if (o.h_target) p.h_target = *o.h_target;
  if (o.tol) p.tol = *o.tol;
  if (o.damping) p.damping = *o.damping;
  if (o.max_iters) p.max_iters = *o.max_iters;
  if (o.seed) p.simulation.seed = *o.seed;
  if (o.samples) p.simulation.samples = *o.samples;
  if (!(p.h_target > 0.0)) throw ModelError("h-target must be positive");
  p.mfg_config().validate();
  p.simulation.validate();
  return p;
}

std::vector<double> or_zero(const std::vector<double>& v, std::size_t ne) {
  return v.empty() ? std::vector<double>(ne, 0.0) : v;
}

void emit(const Options& o, const DiscreteNetwork& disc, const ProblemSpec& spec, const SolutionView& view) {
  if (o.out.empty()) return;
  write_solution(o.out, disc, spec, view);
  std::printf("wrote %s\n", o.out.c_str());
}

void print_vertex_sides(const DiscreteNetwork& disc, const GridFunction& m) {
  const auto& net = disc.network();
  for (const auto& vx : net.vertices()) {
    std::printf("  vertex %d:", vx.id);
    for (EdgeId a : vx.incident_edges) {
      const int k = net.edge(a).tail == vx.id ? 0 : disc.intervals(a);
      std::printf("  m[edge %d] = %.10g", a, m.at(a, k));
    }
    std::printf("\n");
  }
}

int solve_linear(const Options& o) {
  const auto spec = load(o);
  const auto disc = spec.discretize();
  const auto f = spec.linear_f.empty() ? std::vector<double>(disc.num_edges(), 1.0) : spec.linear_f;
  const auto u = solve_linear_kirchhoff(disc, spec.linear_lambda, per_edge_constant(disc, f));
  const auto oracle = analytic_linear_oracle(disc.network(), spec.linear_lambda, f);
  double err = 0.0;
  for (std::size_t ua = 0; ua < disc.num_edges(); ++ua) {
    const auto a = static_cast<EdgeId>(ua);
    for (int k = 0; k <= disc.intervals(a); ++k)
      err = std::max(err, std::abs(u.at(a, k) - oracle(a, disc.node_position(a, k))));
  }
  std::printf("solve-linear: %zu dofs, lambda %g, sup error against the closed form %.3e\n", disc.size(),
              spec.linear_lambda, err);
  SolutionView view{"linear", &u, nullptr, nullptr, std::numeric_limits<double>::quiet_NaN(), 1, true, json::object()};
  view.extra["oracle_sup_error"] = err;
  emit(o, disc, spec, view);
  return 0;
}

int solve_fp(const Options& o) {
  const auto spec = load(o);
  const auto disc = spec.discretize();
  const auto b = per_edge_constant(disc, or_zero(spec.drift, disc.num_edges()));
  const auto m = solve_stationary_fp(disc, b);
  std::printf("solve-fp: %zu dofs, min m %.6g, mass %.15g\n", disc.size(), m.values().minCoeff(), integrate(m));
  print_vertex_sides(disc, m);
  SolutionView view{"fp", nullptr, &m, nullptr, std::numeric_limits<double>::quiet_NaN(), 1, true, json::object()};
  emit(o, disc, spec, view);
  return 0;
}

int solve_hjb(const Options& o) {
  const auto spec = load(o);
  const auto disc = spec.discretize();
  const auto f = per_edge_constant(disc, or_zero(spec.hjb_f, disc.num_edges()));
  ErgodicOptions eo;
  if (o.tol) eo.tol = *o.tol;
  if (o.max_iters) eo.max_iter = *o.max_iters;
  const auto sol = solve_hjb_ergodic(disc, spec.hamiltonian, f, eo);
  std::printf("solve-hjb: rho %.12g after %d policy steps, residual %.3e, bound |rho| <= %.6g%s\n", sol.rho,
              sol.iterations, sol.residual, sol.rho_bound, sol.used_fallback ? " (vanishing discount)" : "");
  SolutionView view{"hjb", &sol.v, nullptr, &sol.policy, sol.rho, sol.iterations, true, json::object()};
  view.extra["residual"] = sol.residual;
  view.extra["used_fallback"] = sol.used_fallback;
  emit(o, disc, spec, view);
  return 0;
}

int solve_mfg_cmd(const Options& o) {
  const auto spec = load(o);
  const auto disc = spec.discretize();
  const auto sol = solve_mfg(disc, spec.hamiltonian, spec.coupling, spec.mfg_config());
  const auto& r = sol.residuals;
  std::printf("solve-mfg: %s after %d iterations, rho %.12g\n", sol.converged ? "converged" : "NOT converged",
              sol.iterations, sol.rho);
  std::printf("  residuals: hjb %.3e  fp %.3e  mass %.3e  min m %.6g  duality gap %.3e\n", r.hjb(), r.fp(), r.mass,
              r.min_m, r.duality_gap);
  std::printf("  vertex consistency: kirchhoff %.3e  fp flux %.3e\n", r.kirchhoff, r.fp_flux);
  if (!sol.converged && !sol.history.empty()) {
    const auto& last = sol.history.back();
    std::fprintf(stderr, "last iterate: change %.3e, coupling truncation %g, hamiltonian truncation %g\n",
                 last.m_change, last.coupling_truncation, last.hamiltonian_truncation);
  }
  emit(o, disc, spec, view_of(sol));
  return sol.converged ? 0 : 3;
}

int simulate_cmd(const Options& o) {
  auto spec = load(o);
  std::unique_ptr<DiscreteNetwork> own;
  std::optional<GridFunction> m;
  EdgeField process_drift;
  const DiscreteNetwork* disc = nullptr;
  std::optional<LoadedSolution> loaded;
  if (!o.against.empty()) {
    loaded = load_solution(o.against);
    if (!loaded->m) throw ModelError(o.against + ": solution has no density column");
    disc = loaded->disc.get();
    m = loaded->m;
    process_drift = loaded->feedback;
    // an FP solution has no feedback column; take the drift it was solved with
    if (loaded->summary.value("kind", "") == "fp") {
      process_drift = feedback_drift(per_edge_constant(*disc, or_zero(loaded->spec.drift, disc->num_edges())));
    }
  } else {
    own = std::make_unique<DiscreteNetwork>(spec.discretize());
    disc = own.get();
    const auto b = per_edge_constant(*disc, or_zero(spec.drift, disc->num_edges()));
    m = solve_stationary_fp(*disc, b);
    process_drift = feedback_drift(b);
  }
  const auto hist = simulate_paths(*disc, process_drift, spec.simulation);
  const double tv = compare_density(hist, *m);
  const double tol = o.tv_tol.value_or(0.02);
  std::printf("simulate: %llu samples, dt %g, seed %llu\n", static_cast<unsigned long long>(hist.samples),
              spec.simulation.dt, static_cast<unsigned long long>(spec.simulation.seed));
  const auto& net = disc->network();
  for (const auto& [vid, hits] : hist.routing_hits) {
    std::uint64_t total = 0;
    for (auto h : hits) total += h;
    if (total == 0 || hits.size() < 2) continue;
    std::printf("  vertex %d routing:", vid);
    const auto& row = net.routing_row(vid);
    for (std::size_t k = 0; k < hits.size(); ++k)
      std::printf("  %.4f (p %.4f)", static_cast<double>(hits[k]) / static_cast<double>(total), row[k]);
    std::printf("\n");
  }
  std::printf("TV distance %.5f (tolerance %.3g)\n", tv, tol);
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    std::ofstream os(fs::path(o.out) / "histogram.csv");
    write_histogram_csv(os, hist);
  }
  return tv < tol ? 0 : 4;
}

int validate_cmd(const Options& o) {
  const auto spec = load(o);
  const auto rep = validate_problem(spec, spec.simulation.seed);
  std::printf("%-44s %-12s %-10s %s\n", "check", "value", "tolerance", "result");
  for (const auto& c : rep.checks) {
    std::printf("%-44s %-12.4g %-10.3g %s", c.name.c_str(), c.value, c.tolerance, c.pass ? "PASS" : "FAIL");
    if (!c.note.empty()) std::printf("  (%s)", c.note.c_str());
    std::printf("\n");
  }
  return rep.all_pass() ? 0 : 5;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stationary mean field games on metric networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(NETMFG_VERSION));

  Options o;
  auto* lin = app.add_subcommand("solve-linear", "solve -mu u'' + lambda u = f with Kirchhoff conditions");
  auto* fp = app.add_subcommand("solve-fp", "stationary Fokker-Planck density for a given drift");
  auto* hjb = app.add_subcommand("solve-hjb", "ergodic HJB equation");
  auto* mfg = app.add_subcommand("solve-mfg", "coupled MFG system");
  auto* sim = app.add_subcommand("simulate", "Monte Carlo check of an invariant density");
  auto* val = app.add_subcommand("validate", "run the property suite on a problem");
  for (auto* c : {lin, fp, hjb, mfg, sim, val}) add_common(c, o);
  sim->add_option("--against", o.against, "solution directory or solution.csv to compare with");
  sim->add_option("--tv-tol", o.tv_tol, "pass threshold on the TV distance (default 0.02)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (lin->parsed()) return solve_linear(o);
    if (fp->parsed()) return solve_fp(o);
    if (hjb->parsed()) return solve_hjb(o);
    if (mfg->parsed()) return solve_mfg_cmd(o);
    if (sim->parsed()) return simulate_cmd(o);
    if (val->parsed()) return validate_cmd(o);
  } catch (const ModelError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const SolverError& e) {
    std::fprintf(stderr, "solver failure: %s (last residual %.3e)\n", e.what(), e.last_residual());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
