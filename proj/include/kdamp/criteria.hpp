#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <future>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "assembly.hpp"
#include "collision.hpp"
#include "domain.hpp"
#include "json.hpp"
#include "knudsen.hpp"
#include "neumann.hpp"
#include "slab_sim.hpp"
#include "viscous_layer.hpp"

// Acceptance checks shared by the acceptance binary and the verify-all pipeline.
namespace kdamp {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string summary;
  std::vector<std::string> context;  // extra diagnostics, not part of the verdict
  nlohmann::json data;
  double seconds = 0;

  std::string line() const { return fmt::format("{} [{}] {}: {}", pass ? "PASS" : "FAIL", id, name, summary); }
};

struct CriteriaOptions {
  int seed = 12345;
  bool context = true;  // run the extra refinement and extended-range diagnostics
  int assembly_Q = 10;
  std::vector<double> scaling_eps = {1e-1, 3e-2, 1e-2, 3e-3, 1e-3};
  SimConfig sim;  // base point of the damping runs
  std::vector<double> sim_eps = {0.01, 0.0025};
};

namespace detail {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

inline Domain criteria_domain(DomainKind k) {
  DomainSpec s;
  s.kind = k;
  return make_domain(s);
}

inline std::vector<std::vector<NeumannMode>> groups_of(const std::vector<NeumannMode>& modes, int kmax) {
  std::vector<std::vector<NeumannMode>> out;
  std::vector<int> seen;
  for (const auto& m : modes) {
    if (m.k > kmax || std::find(seen.begin(), seen.end(), m.group_id) != seen.end()) continue;
    seen.push_back(m.group_id);
    std::vector<NeumannMode> g;
    for (const auto& q : modes)
      if (q.group_id == m.group_id) g.push_back(q);
    out.push_back(g);
  }
  return out;
}

inline std::string yes(bool b) { return b ? "ok" : "FAILED"; }

}  // namespace detail

inline std::vector<NeumannMode> first_degenerate_group(const Domain& dom, int search = 8) {
  auto modes = compute_modes(dom, search);
  for (const auto& m : modes)
    if (m.degeneracy > 1) {
      std::vector<NeumannMode> g;
      for (const auto& q : modes)
        if (q.group_id == m.group_id) g.push_back(q);
      return g;
    }
  return {};
}

// 1: BGK transport coefficients and flux identities
inline CriterionResult criterion_transport() {
  detail::Stopwatch sw;
  CriterionResult r{1, "transport coefficients"};
  double dev = 0, flux = 0;
  for (int D : {2, 3}) {
    CollisionModel m = make_collision(make_velocity_grid(D, 12), CollisionSpec{});
    TransportCoefficients tc = transport_coefficients(m);
    FluxReport fr = verify_flux_identities(m);
    dev = std::max({dev, std::abs(tc.nu - 1), std::abs(tc.kappa - 1)});
    flux = std::max(flux, fr.max_dev());
    r.data[fmt::format("D{}", D)] = {{"nu", tc.nu}, {"kappa", tc.kappa}, {"flux_identity_dev", fr.max_dev()}};
  }
  r.seconds = sw.seconds();
  r.pass = dev < 1e-9 && flux < 1e-9 && r.seconds < 5;
  r.summary = fmt::format("max |nu-1|,|kappa-1| = {:.1e}, flux identities {:.1e} (tol 1e-9), {:.2f} s (< 5 s)", dev,
                          flux, r.seconds);
  return r;
}

// 2: Re(i lambda1) < 0 across domains, modes, tau and chi
inline CriterionResult criterion_dissipativity() {
  detail::Stopwatch sw;
  CriterionResult r{2, "dissipativity"};
  int checked = 0, bad = 0;
  double worst = -std::numeric_limits<double>::infinity();
  for (DomainKind k : {DomainKind::Slab, DomainKind::Rectangle, DomainKind::Disk}) {
    Domain dom = detail::criteria_domain(k);
    auto modes = compute_modes(dom, 5);
    for (const auto& m : modes)
      for (int tau : {1, -1})
        for (double chi : {0.5, 1.0, 2.0}) {
          ++checked;
          try {
            DampingCoefficient d = damping_coefficient(dom, m, tau, LayerParams{1.0, 1.0, chi, 2});
            worst = std::max(worst, d.il1.real());
            r.data["rows"].push_back({{"domain", d.domain}, {"k", m.k}, {"tau", tau}, {"chi", chi},
                                      {"re_il1", d.il1.real()}, {"im_il1", d.il1.imag()}});
          } catch (const std::runtime_error&) {
            ++bad;
          }
        }
  }
  r.seconds = sw.seconds();
  r.pass = bad == 0 && worst < 0 && r.seconds < 30;
  r.summary = fmt::format("{} cases (3 domains x k=1..5 x tau x chi), largest Re(i lambda1) = {:.4e}, {:.2f} s (< 30 s)",
                          checked, worst, r.seconds);
  return r;
}

// 3: surface route, closed form and Q1 diagonal agree
inline CriterionResult criterion_cross_route() {
  detail::Stopwatch sw;
  CriterionResult r{3, "cross-route i lambda1"};
  double surf = 0, diag = 0;
  for (DomainKind k : {DomainKind::Slab, DomainKind::Rectangle, DomainKind::Disk}) {
    Domain dom = detail::criteria_domain(k);
    auto modes = compute_modes(dom, 8);
    double ds = 0, dq = 0;
    for (const auto& g : detail::groups_of(modes, 5))
      for (int tau : {1, -1}) {
        const LayerParams p{1.0, 1.0, 1.0, 2};
        MultiplicityResult mr = orthogonalize_multiplicity(dom, g, tau, p);
        for (size_t j = 0; j < g.size(); ++j) {
          DampingCoefficient d = damping_coefficient(dom, g[j], tau, p);
          ds = std::max(ds, std::abs(d.il1_surface - d.il1));
          dq = std::max(dq, std::abs(mr.Q1(j, j) - d.il1));
        }
        dq = std::max(dq, (mr.Q1 - mr.Q1_closed).cwiseAbs().maxCoeff());
      }
    r.data[to_string(k)] = {{"surface_vs_closed", ds}, {"q1_diag_vs_closed", dq}};
    surf = std::max(surf, ds);
    diag = std::max(diag, dq);
  }
  r.seconds = sw.seconds();
  r.pass = surf < 1e-8 && diag < 1e-8;
  r.summary = fmt::format("surface vs closed {:.1e}, Q1 diagonal vs closed {:.1e} (tol 1e-8, slab/square/disk)", surf,
                          diag);
  return r;
}

// 4: rotation of the first degenerate pair on the unit square
inline CriterionResult criterion_multiplicity() {
  detail::Stopwatch sw;
  CriterionResult r{4, "multiplicity handling"};
  Domain dom = detail::criteria_domain(DomainKind::Rectangle);
  auto group = first_degenerate_group(dom);
  double off = 0, compat = 0;
  bool found = group.size() >= 2;
  if (found)
    for (int tau : {1, -1})
      for (double chi : {0.5, 1.0, 2.0}) {
        MultiplicityResult mr = orthogonalize_multiplicity(dom, group, tau, LayerParams{1.0, 1.0, chi, 2});
        off = std::max(off, mr.offdiag);
        compat = std::max(compat, mr.compat);
        r.data["runs"].push_back({{"tau", tau}, {"chi", chi}, {"offdiag", mr.offdiag}, {"compat", mr.compat},
                                  {"collide", mr.collide}});
      }
  r.seconds = sw.seconds();
  r.pass = found && off < 1e-9 && compat < 1e-8;
  r.summary = fmt::format("pair size {}, off-diagonal |Q1| after rotation {:.1e} (< 1e-9), compatibility {:.1e} (< 1e-8)",
                          group.size(), off, compat);
  return r;
}

// 5: Knudsen solvability, decay and the unsolvable control
inline CriterionResult criterion_knudsen(int seed = 12345, int assembly_Q = 10) {
  detail::Stopwatch sw;
  CriterionResult r{5, "Knudsen solvability"};
  // round-1 data of the assembled slab eigenpairs
  double solv = 0;
  for (int tau : {1, -1})
    for (double chi : {0.5, 1.0, 2.0}) {
      AssemblyOptions o;
      o.velocity_points = assembly_Q;
      o.chi = chi;
      o.tau = tau;
      SlabEigenpair a = build_slab_eigenpair(o);
      for (const auto& W : a.wall) solv = std::max(solv, W.solv1.max_abs());
    }
  // iterative half-space solve of a round-1 datum with random layer derivatives
  std::mt19937 rng(seed);
  std::normal_distribution<double> nd;
  CollisionModel m = make_collision(make_velocity_grid(2, assembly_Q, VelocityRule::HalfRange), CollisionSpec{});
  WallFrame f = make_wall_frame(Eigen::Vector2d(-1, 0));
  BoundaryContext ctx = make_boundary_context(m, f, 1.0);
  VecC dz_u(2);
  dz_u << 0, cplx(nd(rng), nd(rng));
  const cplx dz_th(nd(rng), nd(rng));
  HalfSpaceSolution s = solve_halfspace(HalfSpaceProblem{&m, f, round1_datum(ctx, dz_u, dz_th), {}});
  solv = std::max(solv, s.solvability.max_abs());
  const bool decays = s.converged && s.tail_decays && s.decay_rate < 0;
  // unit normal mass flux violates the wall condition
  const auto& G = m.grid;
  Eigen::VectorXd vn = normal_speeds(G, f);
  VecC H = VecC::Zero(G.size());
  for (int q = 0; q < G.size(); ++q)
    if (vn(q) > 0) H(q) = 2.0 * vn(q);
  HalfSpaceSolution u = solve_halfspace(HalfSpaceProblem{&m, f, H, {}});
  const double injected = std::abs(u.solvability.mass);
  const double tail_err = std::abs(u.tail_mass_flux - u.solvability.mass) / injected;
  const bool tail_nonzero = !u.tail_decays && std::abs(u.tail_mass_flux) > 0.5 * injected;
  r.seconds = sw.seconds();
  r.pass = solv < 1e-7 && decays && tail_nonzero && tail_err < 0.05;
  r.summary = fmt::format(
      "solvability residuals {:.1e} (< 1e-7); round-1 solve {} (decay rate {:.3f}); unit flux: tail mass flux {:.4f} vs "
      "injected {:.4f}, error {:.2f}% (< 5%)",
      solv, decays ? "converged and decays" : "did not decay", s.decay_rate, std::abs(u.tail_mass_flux), injected,
      100 * tail_err);
  r.data = {{"solvability_max", solv},    {"decay_rate", s.decay_rate},   {"tail_ratio", s.tail_ratio},
            {"iterations", s.iterations}, {"unit_flux_tail", std::abs(u.tail_mass_flux)},
            {"unit_flux_injected", injected}};
  return r;
}

// 6: residual scaling of the order-2 ansatz
inline CriterionResult criterion_scaling(const CriteriaOptions& opt = {}) {
  detail::Stopwatch sw;
  CriterionResult r{6, "residual scaling"};
  AssemblyOptions o;
  o.velocity_points = opt.assembly_Q;
  SlabEigenpair a = build_slab_eigenpair(o);
  ScalingReport s = scaling_study(a, opt.scaling_eps);
  r.seconds = sw.seconds();
  const bool pi = std::abs(s.slope_interior - 1) <= 0.15, pb = std::abs(s.slope_boundary - 3) <= 0.2,
             pd = std::abs(s.slope_deviation - 0.25) <= 0.05;
  r.pass = pi && pb && pd && r.seconds < 300;
  r.summary = fmt::format(
      "slopes: interior {:.3f} (1 +- 0.15, {}), boundary {:.3f} (3 +- 0.2, {}), deviation {:.3f} (0.25 +- 0.05, {}); "
      "{:.1f} s",
      s.slope_interior, detail::yes(pi), s.slope_boundary, detail::yes(pb), s.slope_deviation, detail::yes(pd),
      r.seconds);
  r.data["report"] = s;
  if (opt.context) {
    std::vector<double> ext;
    for (int p = 1; p <= 9; ++p) ext.push_back(std::pow(10.0, -p));
    ScalingReport e = scaling_study(a, ext);
    std::string li, ld;
    for (size_t j = 1; j < ext.size(); ++j) {
      const double dl = std::log(ext[j] / ext[j - 1]);
      li += fmt::format(" {:.3f}", 2 * std::log(e.interior[j] / e.interior[j - 1]) / dl);
      ld += fmt::format(" {:.4f}", std::log(e.deviation[j] / e.deviation[j - 1]) / dl);
    }
    r.context.push_back("local slopes per decade, eps 1e-1 down to 1e-9:");
    r.context.push_back("  interior vs sqrt(eps):" + li);
    r.context.push_back("  deviation vs eps:     " + ld);
    r.data["extended"] = e;
  }
  return r;
}

// simulator runs shared by criteria 7 and 8
struct DampingCampaign {
  std::vector<SimResult> runs;     // chi = 1 at each eps, then the chi = 0 control
  std::vector<SimResult> refined;  // same points at 2 Nx, context only
  double seconds = 0;              // single-threaded cost of the main runs
};

inline DampingCampaign run_damping_campaign(const CriteriaOptions& opt, int threads = 1) {
  std::vector<SimConfig> cfgs;
  for (double e : opt.sim_eps) {
    SimConfig c = opt.sim;
    c.eps = e;
    c.chi = 1.0;
    cfgs.push_back(c);
  }
  SimConfig ctl = opt.sim;
  ctl.eps = opt.sim_eps.front();
  ctl.chi = 0.0;
  cfgs.push_back(ctl);
  const size_t main_count = cfgs.size();
  if (opt.context)
    for (size_t j = 0; j < main_count; ++j) {
      SimConfig c = cfgs[j];
      c.Nx *= 2;
      cfgs.push_back(c);
    }
  std::vector<SimResult> out(cfgs.size());
  const size_t width = std::max(1, threads);
  for (size_t b = 0; b < cfgs.size(); b += width) {
    std::vector<std::future<SimResult>> jobs;
    for (size_t j = b; j < std::min(cfgs.size(), b + width); ++j)
      jobs.push_back(std::async(std::launch::async, [c = cfgs[j]] { return run_and_fit(c); }));
    for (size_t j = 0; j < jobs.size(); ++j) out[b + j] = jobs[j].get();
  }
  DampingCampaign dc;
  for (size_t j = 0; j < out.size(); ++j) (j < main_count ? dc.runs : dc.refined).push_back(out[j]);
  for (const auto& r : dc.runs) dc.seconds += r.seconds;
  return dc;
}

// 7: damping rate, its eps law and the specular control
inline CriterionResult criterion_damping(const DampingCampaign& dc) {
  CriterionResult r{7, "damping verification"};
  const size_t n = dc.runs.size();
  const SimResult& coarse = dc.runs.front();  // largest eps
  const SimResult& fine = dc.runs[n - 2];     // smallest eps
  const SimResult& ctl = dc.runs.back();
  bool sign = true, freq = true, fit_ok = true;
  std::string freqs;
  for (size_t j = 0; j + 1 < n; ++j) {
    const SimResult& s = dc.runs[j];
    sign = sign && s.fit.sigma < 0;
    fit_ok = fit_ok && !s.fit.inconclusive;
    const double w = s.fit.omega * s.config.eps / s.lambda0;
    freq = freq && std::abs(w - 1) <= 0.05;
    freqs += fmt::format(" {:.4f}", w);
  }
  const double ratio = fine.fit.sigma / coarse.fit.sigma;
  const bool pr = std::abs(ratio - 2) <= 0.4;
  const double rel = std::abs(fine.fit.sigma - fine.sigma_pred) / std::abs(fine.sigma_pred);
  const bool pc = rel <= 0.2;
  const double ctl_bound = 0.1 * std::abs(coarse.sigma_pred);
  const bool pctl = std::abs(ctl.fit.sigma) < ctl_bound;
  r.seconds = dc.seconds;
  r.pass = sign && fit_ok && pr && pc && freq && pctl && r.seconds < 900;
  r.summary = fmt::format(
      "(a) sigma_fit {:.3f}, {:.3f} {} ; (b) ratio {:.3f} (2 +- 0.4, {}); (c) |sigma_fit - sigma_pred|/|sigma_pred| = "
      "{:.3f} at eps={} (<= 0.2, {}); omega eps/lambda0 ={} ({}); chi=0: |sigma_fit| {:.3f} vs {:.3f} ({}); {:.0f} s",
      coarse.fit.sigma, fine.fit.sigma, detail::yes(sign && fit_ok), ratio, detail::yes(pr), rel, fine.config.eps,
      detail::yes(pc), freqs, detail::yes(freq), std::abs(ctl.fit.sigma), ctl_bound, detail::yes(pctl), r.seconds);
  for (const auto& s : dc.runs) r.data["runs"].push_back(fit_json(s));
  r.context.push_back("predictions including the next eigenvalue correction Re(i lambda2):");
  for (const auto& s : dc.runs)
    r.context.push_back(fmt::format("  eps={} chi={} Nx={}: sigma_fit {:.3f}, Re(il1)/sqrt(eps) {:.3f}, + Re(il2) {:.3f}",
                                    s.config.eps, s.config.chi, s.config.Nx, s.fit.sigma, s.sigma_pred,
                                    s.sigma_pred_next));
  if (dc.refined.size() == dc.runs.size()) {
    r.context.push_back("first-order Nx extrapolation 2 sigma(2Nx) - sigma(Nx) removes the upwind damping:");
    for (size_t j = 0; j < n; ++j) {
      const SimResult &a = dc.runs[j], &b = dc.refined[j];
      const double ex = 2 * b.fit.sigma - a.fit.sigma;
      r.context.push_back(fmt::format("  eps={} chi={}: sigma(Nx={}) {:.3f}, extrapolated {:.3f}, next-order prediction "
                                      "{:.3f} ({:+.1f}%)",
                                      a.config.eps, a.config.chi, b.config.Nx, b.fit.sigma, ex, a.sigma_pred_next,
                                      100 * (ex / a.sigma_pred_next - 1)));
      r.data["refined"].push_back(fit_json(b));
    }
    const double change = std::abs(dc.refined.front().fit.sigma / coarse.fit.sigma - 1);
    r.context.push_back(fmt::format("  grid convergence at eps={}: doubling Nx moves sigma_fit by {:.1f}% (< 10%)",
                                    coarse.config.eps, 100 * change));
  }
  return r;
}

// 8: conservation and contraction over the damping runs
inline CriterionResult criterion_conservation(const DampingCampaign& dc) {
  CriterionResult r{8, "conservation and contraction"};
  double mass = 0, ent = 0, flux = 0, spec = 0;
  bool monotone = true;
  for (const auto* set : {&dc.runs, &dc.refined})
    for (const auto& s : *set) {
      mass = std::max(mass, s.diag.mass_drift);
      ent = std::max(ent, s.diag.entropy_increase);
      flux = std::max(flux, s.diag.wall_mass_flux);
      if (s.config.chi == 0) spec = std::max(spec, s.diag.wall_entropy_defect);
      for (size_t j = 1; j < s.E.size(); ++j) monotone = monotone && s.E[j] <= s.E[j - 1];
    }
  // one rounding unit of E(0) per step
  const double ent_tol = 1e-15;
  r.pass = mass < 1e-10 && ent <= ent_tol && monotone && spec < 1e-12 && flux < 1e-12;
  r.summary = fmt::format(
      "mass drift {:.1e} (< 1e-10); largest per-step entropy increase {:.1e} E(0) (<= {:.0e}); wall mass flux {:.1e} "
      "(< 1e-12); specular wall entropy defect {:.1e} (< 1e-12)",
      mass, ent, ent_tol, flux, spec);
  r.data = {{"mass_drift", mass}, {"entropy_increase", ent}, {"wall_mass_flux", flux}, {"specular_defect", spec}};
  return r;
}

inline std::vector<CriterionResult> run_all_criteria(const CriteriaOptions& opt, int threads = 1,
                                                     const std::function<void(const CriterionResult&)>& report = {}) {
  std::vector<CriterionResult> out;
  auto add = [&](CriterionResult c) {
    if (report) report(c);
    out.push_back(std::move(c));
  };
  add(criterion_transport());
  add(criterion_dissipativity());
  add(criterion_cross_route());
  add(criterion_multiplicity());
  add(criterion_knudsen(opt.seed, opt.assembly_Q));
  add(criterion_scaling(opt));
  DampingCampaign dc = run_damping_campaign(opt, threads);
  add(criterion_damping(dc));
  add(criterion_conservation(dc));
  return out;
}

}  // namespace kdamp
