#include <openssl/evp.h>
#include <openssl/opensslv.h>

#include <boost/version.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kdamp/assembly.hpp"
#include "kdamp/criteria.hpp"
#include "kdamp/knudsen.hpp"
#include "kdamp/neumann.hpp"
#include "kdamp/run_config.hpp"
#include "kdamp/slab_sim.hpp"
#include "kdamp/svg.hpp"
#include "kdamp/viscous_layer.hpp"

namespace fs = std::filesystem;
using namespace kdamp;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

struct Suite {
  std::string name;
  bool pass = false;
  std::string detail;
};

// files and verdicts of one invocation
class Run {
 public:
  Run(fs::path out, bool plots, int threads) : out_(std::move(out)), plots_(plots), threads_(threads) {}

  const fs::path& out() const { return out_; }
  bool plots() const { return plots_; }
  int threads() const { return threads_; }

  void text(const std::string& rel, const std::string& body) {
    const fs::path p = out_ / rel;
    fs::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os << body;
    os.close();
    if (!os) throw std::runtime_error("write failed for " + p.string());
    files_.push_back(rel);
  }
  void json_file(const std::string& rel, json j) { text(rel, strip_timing(std::move(j)).dump(2) + "\n"); }
  void svg(const std::string& rel, const Plot& p) {
    if (plots_) text(rel, render_svg(p));
  }
  // keep_detail = false for text that carries wall times
  void suite(const std::string& name, bool pass, const std::string& detail, bool keep_detail = true) {
    suites_.push_back({name, pass, keep_detail ? detail : std::string()});
    std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  }

  bool all_pass() const {
    for (const auto& s : suites_)
      if (!s.pass) return false;
    return true;
  }
  const std::vector<std::string>& files() const { return files_; }
  const std::vector<Suite>& suites() const { return suites_; }

  // wall-clock numbers would break byte-identical reruns
  static json strip_timing(json j) {
    if (j.is_object()) {
      j.erase("seconds");
      for (auto& [k, v] : j.items()) v = strip_timing(v);
    } else if (j.is_array()) {
      for (auto& v : j) v = strip_timing(v);
    }
    return j;
  }

 private:
  fs::path out_;
  bool plots_ = false;
  int threads_ = 1;
  std::vector<std::string> files_;
  std::vector<Suite> suites_;
};

std::string sha256_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::vector<char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, buf.data(), buf.size()) != 1 || EVP_DigestFinal_ex(ctx, md, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256 failed for " + p.string());
  }
  EVP_MD_CTX_free(ctx);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

Domain domain_of(const RunConfig& c) {
  DomainSpec s = c.domain;
  s.D = c.grid_D;
  return make_domain(s);
}

LayerParams layer_params(const RunConfig& c, double chi) {
  CollisionModel m = make_collision(make_velocity_grid(c.grid_D, c.grid_Q, c.grid_rule), c.collision);
  TransportCoefficients tc = transport_coefficients(m);
  return LayerParams{tc.nu, tc.kappa, chi, c.grid_D};
}

std::string csv_number(double v) { return fmt::format("{:.17g}", v); }

// ---- pipelines ----

void pipeline_modes(const RunConfig& c, Run& run) {
  Domain dom = domain_of(c);
  auto modes = compute_modes(dom, c.mode_count);
  std::ostringstream os;
  write_modes_csv(os, modes);
  run.text("modes.csv", os.str());
  bool sorted = true, lam = true, exact = true;
  for (size_t j = 0; j < modes.size(); ++j) {
    if (j && modes[j].mu < modes[j - 1].mu) sorted = false;
    const double l = std::sqrt((c.grid_D + 2.0) / c.grid_D * modes[j].mu);
    if (std::abs(l - modes[j].lambda0) > 1e-12 * l) lam = false;
    if (dom.kind == DomainKind::Slab) {
      const double k = static_cast<double>(j + 1);
      if (std::abs(modes[j].mu - k * k * std::numbers::pi * std::numbers::pi) > 1e-12 * modes[j].mu) exact = false;
    }
  }
  run.suite("spectrum", sorted && lam && exact && static_cast<int>(modes.size()) == c.mode_count,
            fmt::format("{} modes on {}, ascending {}, lambda0 consistent {}{}", modes.size(), to_string(dom.kind),
                        sorted, lam, dom.kind == DomainKind::Slab ? fmt::format(", mu_k = (k pi)^2 {}", exact) : ""));
}

void pipeline_coeffs(const RunConfig& c, Run& run) {
  CollisionModel m = make_collision(make_velocity_grid(c.grid_D, c.grid_Q, c.grid_rule), c.collision);
  TransportCoefficients tc = transport_coefficients(m);
  FluxReport fr = verify_flux_identities(m);
  json j = {{"collision", to_string(c.collision.kind)},
            {"D", c.grid_D},
            {"Q", c.grid_Q},
            {"nu", tc.nu},
            {"kappa", tc.kappa},
            {"flux_identity_dev_A", fr.max_dev_A},
            {"flux_identity_dev_B", fr.max_dev_B},
            {"condition_number", m.condition_number()}};
  run.json_file("coeffs.json", j);
  run.suite("flux identities", fr.max_dev() < c.tol.flux_identity && tc.nu > 0 && tc.kappa > 0,
            fmt::format("nu {:.12f}, kappa {:.12f}, identity deviation {:.2e} (tol {:.0e})", tc.nu, tc.kappa,
                        fr.max_dev(), c.tol.flux_identity));
}

void pipeline_damping(const RunConfig& c, Run& run) {
  Domain dom = domain_of(c);
  int kmax = c.mode_count;
  for (int k : c.k) kmax = std::max(kmax, k);
  auto modes = compute_modes(dom, kmax + 4);
  bool dissip = true;
  double cross = 0, off = 0, compat = 0;
  int groups = 0;
  json mult = json::array();
  for (double chi : c.chi) {
    const LayerParams p = layer_params(c, chi);
    std::vector<DampingCoefficient> rows;
    for (int k : c.k)
      for (int tau : c.tau) {
        try {
          DampingCoefficient d = damping_coefficient(dom, modes.at(k - 1), tau, p);
          cross = std::max(cross, std::abs(d.il1_surface - d.il1));
          rows.push_back(d);
        } catch (const std::runtime_error& e) {
          dissip = false;
          std::fprintf(stderr, "mode %d tau %d chi %g: %s\n", k, tau, chi, e.what());
        }
      }
    std::ostringstream os;
    write_damping_csv(os, rows);
    run.text(c.chi.size() == 1 ? "damping.csv" : fmt::format("damping_chi{}.csv", chi), os.str());
    std::vector<int> done;
    for (int k : c.k) {
      const NeumannMode& m = modes.at(k - 1);
      if (m.degeneracy < 2 || std::find(done.begin(), done.end(), m.group_id) != done.end()) continue;
      done.push_back(m.group_id);
      std::vector<NeumannMode> g;
      for (const auto& q : modes)
        if (q.group_id == m.group_id) g.push_back(q);
      for (int tau : c.tau) {
        MultiplicityResult r = orthogonalize_multiplicity(dom, g, tau, p);
        ++groups;
        off = std::max(off, r.offdiag);
        compat = std::max(compat, r.compat);
        json rot = json::array();
        for (int i = 0; i < r.rotation.rows(); ++i) {
          json row = json::array();
          for (int j = 0; j < r.rotation.cols(); ++j) row.push_back(r.rotation(i, j));
          rot.push_back(row);
        }
        json il = json::array();
        for (auto z : r.il1) il.push_back({z.real(), z.imag()});
        mult.push_back({{"chi", chi}, {"tau", tau}, {"group_id", m.group_id}, {"size", g.size()},
                        {"rotation", rot}, {"il1", il}, {"offdiag", r.offdiag}, {"compat", r.compat},
                        {"collide", r.collide}});
      }
    }
  }
  if (groups) run.json_file("multiplicity.json", mult);
  run.suite("dissipativity", dissip, "Re(i lambda1) < 0 for every requested mode");
  run.suite("cross route", cross < c.tol.cross_route,
            fmt::format("surface vs closed form {:.2e} (tol {:.0e})", cross, c.tol.cross_route));
  if (groups)
    run.suite("multiplicity", off < c.tol.offdiag && compat < c.tol.compat,
              fmt::format("{} degenerate groups, off-diagonal {:.2e}, compatibility {:.2e}", groups, off, compat));
}

void pipeline_knudsen(const RunConfig& c, Run& run) {
  CollisionModel m = make_collision(make_velocity_grid(2, c.knudsen_Q, VelocityRule::HalfRange), c.collision);
  WallFrame f = make_wall_frame(Eigen::Vector2d(-1, 0));
  BoundaryContext ctx = make_boundary_context(m, f, c.knudsen_chi);
  std::mt19937 rng(c.seed);
  std::normal_distribution<double> nd;
  VecC dz_u(2);
  dz_u << 0, cplx(nd(rng), nd(rng));
  const cplx dz_th(nd(rng), nd(rng));
  HalfSpaceSolution s = solve_halfspace(HalfSpaceProblem{&m, f, round1_datum(ctx, dz_u, dz_th), {}}, c.halfspace);
  const auto& G = m.grid;
  Eigen::VectorXd vn = normal_speeds(G, f);
  VecC H = VecC::Zero(G.size());
  for (int q = 0; q < G.size(); ++q)
    if (vn(q) > 0) H(q) = 2.0 * vn(q);
  HalfSpaceSolution u = solve_halfspace(HalfSpaceProblem{&m, f, H, {}}, c.halfspace);
  std::ostringstream os;
  write_knudsen_csv(os, s, "round1");
  std::ostringstream os2;
  write_knudsen_csv(os2, u, "unit_flux");
  std::string body = os.str(), more = os2.str();
  body += more.substr(more.find('\n') + 1);
  run.text("knudsen.csv", body);
  auto summary = [](const HalfSpaceSolution& h) {
    return json{{"converged", h.converged},          {"iterations", h.iterations},
                {"solvability", h.solvability.max_abs()}, {"decay_rate", h.decay_rate},
                {"tail_ratio", h.tail_ratio},        {"tail_decays", h.tail_decays},
                {"tail_mass_flux", {h.tail_mass_flux.real(), h.tail_mass_flux.imag()}},
                {"conservation_defect", h.conservation_defect}};
  };
  run.json_file("knudsen.json", {{"chi", c.knudsen_chi}, {"seed", c.seed}, {"round1", summary(s)},
                                 {"unit_flux", summary(u)}});
  run.suite("knudsen solvability", s.converged && s.solvability.max_abs() < c.tol.solvability && s.tail_decays,
            fmt::format("residual {:.2e} (tol {:.0e}), converged {}, tail decays {} (rate {:.3f})",
                        s.solvability.max_abs(), c.tol.solvability, s.converged, s.tail_decays, s.decay_rate));
  const double inj = std::abs(u.solvability.mass), err = std::abs(u.tail_mass_flux - u.solvability.mass) / inj;
  run.suite("unsolvable control", !u.tail_decays && err < 0.05,
            fmt::format("tail mass flux matches injected flux to {:.2f}%", 100 * err));
  if (run.plots()) {
    Plot p{"half-space profile norm", "xi", "||g||", false, true, {}};
    p.series.push_back({"round-1 datum", s.xi, s.norm});
    p.series.push_back({"unit mass flux", u.xi, u.norm});
    run.svg("knudsen.svg", p);
  }
}

void pipeline_residuals(const RunConfig& c, Run& run) {
  AssemblyOptions o;
  o.collision = c.collision;
  o.velocity_points = c.residual_Q;
  o.chi = c.chi.front();
  o.mode = c.k.front();
  o.tau = c.tau.front();
  o.order = c.order;
  o.cutoff = c.cutoff;
  SlabEigenpair a = build_slab_eigenpair(o);
  run.json_file("eigenpair.json", eigenpair_json(a));
  ScalingReport s = scaling_study(a, c.eps, c.per_panel);
  std::string csv = "eps,interior,boundary,deviation\n";
  for (size_t j = 0; j < s.eps.size(); ++j)
    csv += fmt::format("{},{},{},{}\n", csv_number(s.eps[j]), csv_number(s.interior[j]), csv_number(s.boundary[j]),
                       csv_number(s.deviation[j]));
  run.text("residuals.csv", csv);
  json rep = s;
  run.json_file("scaling.json", rep);
  double solv = 0;
  for (const auto& W : a.wall) solv = std::max({solv, W.solv1.max_abs(), W.solv2.max_abs()});
  const double routes = std::abs(a.il1_green - a.il[1]) + std::abs(a.il1_closed - a.il[1]);
  run.suite("assembly", solv < c.tol.solvability && routes < c.tol.cross_route && a.il[1].real() < 0,
            fmt::format("solvability {:.2e}, i lambda1 routes {:.2e}, orthogonality {:.1e}/{:.1e}", solv, routes,
                        a.orth1, a.orth2));
  std::printf("slopes: interior %.3f, boundary %.3f (vs sqrt eps), deviation %.3f (vs eps)\n", s.slope_interior,
              s.slope_boundary, s.slope_deviation);
  if (run.plots()) {
    std::vector<double> root;
    for (double e : s.eps) root.push_back(std::sqrt(e));
    Plot p{"residual scaling", "sqrt(eps)", "norm", true, true, {}};
    p.series.push_back({"interior", root, s.interior, true});
    p.series.push_back({"boundary", root, s.boundary, true});
    p.series.push_back({"||g - g0||", root, s.deviation, true});
    run.svg("residual_scaling.svg", p);
  }
}

Plot envelope_plot(const SimResult& r) {
  Plot p{fmt::format("mode amplitude, eps = {}", r.config.eps), "t", "|b(t)|", false, true, {}};
  std::vector<double> a, fit;
  for (size_t j = 0; j < r.t.size(); ++j) {
    a.push_back(std::abs(r.b[j]));
    fit.push_back(r.fit.A * std::exp(r.fit.sigma * r.t[j]));
  }
  p.series.push_back({"|b|", r.t, a});
  p.series.push_back({"fit", r.t, fit});
  return p;
}

void write_sim_outputs(Run& run, const SimResult& r, const std::string& dir) {
  std::ostringstream os;
  os << "t,re_b,im_b,abs_b,E\n";
  for (size_t j = 0; j < r.t.size(); ++j)
    os << fmt::format("{},{},{},{},{}\n", csv_number(r.t[j]), csv_number(r.b[j].real()), csv_number(r.b[j].imag()),
                      csv_number(std::abs(r.b[j])), csv_number(r.E[j]));
  run.text(dir + "trace.csv", os.str());
  run.json_file(dir + "fit.json", fit_json(r));
  run.svg(dir + "envelope.svg", envelope_plot(r));
}

void pipeline_simulate(const RunConfig& c, Run& run) {
  std::vector<SimConfig> cfgs;
  for (double e : c.sim_eps) {
    SimConfig s = c.sim;
    s.eps = e;
    cfgs.push_back(s);
  }
  std::vector<SimResult> res(cfgs.size());
  const size_t width = std::max(1, run.threads());
  for (size_t b = 0; b < cfgs.size(); b += width) {
    std::vector<std::future<SimResult>> jobs;
    for (size_t j = b; j < std::min(cfgs.size(), b + width); ++j)
      jobs.push_back(std::async(std::launch::async, [s = cfgs[j]] { return run_and_fit(s); }));
    for (size_t j = 0; j < jobs.size(); ++j) res[b + j] = jobs[j].get();
  }
  for (const auto& r : res) {
    const std::string dir = res.size() == 1 ? "" : fmt::format("eps_{}/", r.config.eps);
    write_sim_outputs(run, r, dir);
    bool mono = true;
    for (size_t j = 1; j < r.E.size(); ++j) mono = mono && r.E[j] <= r.E[j - 1];
    const bool spec_ok = r.config.chi > 0 || r.diag.wall_entropy_defect < c.tol.wall;
    run.suite(fmt::format("conservation eps={}", r.config.eps),
              r.diag.mass_drift < c.tol.mass && r.diag.entropy_increase <= 1e-15 && mono &&
                  r.diag.wall_mass_flux < c.tol.wall && spec_ok,
              fmt::format("mass drift {:.1e}, entropy increase {:.1e}, wall flux {:.1e}{}", r.diag.mass_drift,
                          r.diag.entropy_increase, r.diag.wall_mass_flux,
                          r.config.chi > 0 ? std::string()
                                           : fmt::format(", specular defect {:.1e}", r.diag.wall_entropy_defect)));
    run.suite(fmt::format("fit eps={}", r.config.eps), !r.fit.inconclusive,
              fmt::format("sigma_fit {:.4f} (pred {:.4f}, with next order {:.4f}), omega_fit {:.3f} (pred {:.3f}), "
                          "R^2 {:.6f}",
                          r.fit.sigma, r.sigma_pred, r.sigma_pred_next, r.fit.omega, r.omega_pred, r.fit.r2));
  }
}

void pipeline_verify_all(const RunConfig& c, Run& run) {
  CriteriaOptions opt;
  opt.seed = c.seed;
  opt.context = c.context;
  json all = json::array();
  std::vector<CriterionResult> crit;
  // same order as run_all_criteria, with the campaign kept for the plots
  auto report = [&](CriterionResult r) {
    run.suite(fmt::format("criterion {} {}", r.id, r.name), r.pass, r.summary, false);
    for (const auto& l : r.context) std::printf("    %s\n", l.c_str());
    all.push_back({{"id", r.id}, {"name", r.name}, {"pass", r.pass}, {"context", r.context}, {"data", r.data}});
  };
  report(criterion_transport());
  report(criterion_dissipativity());
  report(criterion_cross_route());
  report(criterion_multiplicity());
  report(criterion_knudsen(opt.seed, opt.assembly_Q));
  CriterionResult sc = criterion_scaling(opt);
  report(sc);
  DampingCampaign dc = run_damping_campaign(opt, run.threads());
  report(criterion_damping(dc));
  report(criterion_conservation(dc));
  run.json_file("verify.json", all);
  for (const auto& r : dc.runs)
    write_sim_outputs(run, r, fmt::format("simulate/eps_{}_chi_{}/", r.config.eps, r.config.chi));
  if (run.plots()) {
    ScalingReport s = sc.data.at("report").get<ScalingReport>();
    std::vector<double> root;
    for (double e : s.eps) root.push_back(std::sqrt(e));
    Plot p{"residual scaling", "sqrt(eps)", "norm", true, true, {}};
    p.series.push_back({"interior", root, s.interior, true});
    p.series.push_back({"boundary", root, s.boundary, true});
    p.series.push_back({"||g - g0||", root, s.deviation, true});
    run.svg("residual_scaling.svg", p);
  }
}

json versions() {
  return {{"knudsen-damp", kVersion},
          {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
          {"boost", fmt::format("{}.{}.{}", BOOST_VERSION / 100000, BOOST_VERSION / 100 % 1000, BOOST_VERSION % 100)},
          {"fmt", fmt::format("{}.{}.{}", FMT_VERSION / 10000, FMT_VERSION / 100 % 100, FMT_VERSION % 100)},
          {"openssl", OPENSSL_VERSION_STR}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boundary-layer damping of acoustic modes: spectra, coefficients, layers, residuals, simulation"};
  std::string pipeline, config_path, out;
  bool plots = false;
  int threads = 1;
  app.add_option("pipeline", pipeline, "one of: modes coeffs damping knudsen residuals simulate verify-all")
      ->required()
      ->check(CLI::IsMember(pipeline_names()));
  app.add_option("--config", config_path, "INI run configuration")->required();
  app.add_option("--out", out, "output directory")->required();
  app.add_flag("--plots", plots, "emit SVG plots");
  app.add_option("--threads", threads, "concurrent tasks within a stage")->check(CLI::PositiveNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  RunConfig cfg;
  try {
    cfg = load_run_config(config_path);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  }

  // the output directory must be writable before anything runs
  try {
    fs::create_directories(out);
    const fs::path probe = fs::path(out) / ".write_probe";
    std::ofstream os(probe);
    if (!os) throw std::runtime_error("not writable");
    os.close();
    fs::remove(probe);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "output error: cannot write to '%s': %s\n", out.c_str(), e.what());
    return 2;
  }

  Run run(out, plots || cfg.plots, threads);
  std::string error;
  try {
    if (pipeline == "modes") pipeline_modes(cfg, run);
    if (pipeline == "coeffs") pipeline_coeffs(cfg, run);
    if (pipeline == "damping") pipeline_damping(cfg, run);
    if (pipeline == "knudsen") pipeline_knudsen(cfg, run);
    if (pipeline == "residuals") pipeline_residuals(cfg, run);
    if (pipeline == "simulate") pipeline_simulate(cfg, run);
    if (pipeline == "verify-all") pipeline_verify_all(cfg, run);
  } catch (const std::exception& e) {
    error = e.what();
    run.suite("pipeline", false, "aborted: " + error);
  }

  json files = json::array();
  for (const auto& f : run.files())
    files.push_back({{"path", f}, {"sha256", sha256_file(run.out() / f)}, {"bytes", fs::file_size(run.out() / f)}});
  json suites = json::array();
  for (const auto& s : run.suites()) suites.push_back({{"name", s.name}, {"pass", s.pass}, {"detail", s.detail}});
  json manifest = {{"pipeline", pipeline},  {"config", cfg.echo}, {"seed", cfg.seed},
                   {"plots", run.plots()},  {"versions", versions()}, {"files", files},
                   {"suites", suites},      {"pass", run.all_pass()}};
  if (!error.empty()) manifest["error"] = error;
  std::ofstream(fs::path(out) / "manifest.json") << Run::strip_timing(manifest).dump(2) << "\n";
  return run.all_pass() ? 0 : 1;
}
