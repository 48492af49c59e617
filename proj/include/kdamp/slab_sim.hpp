#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "assembly.hpp"
#include "collision.hpp"
#include "json.hpp"
#include "velocity.hpp"

namespace kdamp {

enum class SimInit { Mode, Ansatz, Zero };

inline std::string to_string(SimInit i) {
  switch (i) {
    case SimInit::Mode: return "mode";
    case SimInit::Ansatz: return "ansatz";
    case SimInit::Zero: return "zero";
  }
  return "?";
}

inline SimInit parse_sim_init(const std::string& s) {
  if (s == "mode") return SimInit::Mode;
  if (s == "ansatz") return SimInit::Ansatz;
  if (s == "zero") return SimInit::Zero;
  throw std::invalid_argument("unknown init '" + s + "'");
}

struct SimConfig {
  double eps = 0.01;
  double chi = 1.0;  // 0 gives a specular wall
  int D = 2;
  int Nx = 200;
  int Q = 12;  // half-range points per axis
  CollisionSpec collision;
  double cfl = 0.9;
  double dt = 0;       // 0: largest step allowed by cfl and the sampling grid
  double t_final = 0;  // 0: stop after min_periods or when |b| drops below stop_fraction
  int mode = 1;
  int tau = 1;
  SimInit init = SimInit::Mode;
  int test_order = 2;  // order of the projecting ansatz
  LayerCutoff cutoff = LayerCutoff::Bump;
  int samples_per_period = 20;
  double min_periods = 20;
  double stop_fraction = 0.05;
  double skip_periods = 1;  // start of the fit window

  double alpha() const { return std::sqrt(2 * std::numbers::pi) * chi * std::sqrt(eps); }

  void check() const {
    if (!(eps > 0)) throw std::invalid_argument("eps must be positive");
    if (!(chi >= 0)) throw std::invalid_argument("chi must be nonnegative");
    if (!(alpha() <= 1)) throw std::invalid_argument(fmt::format("accommodation {} outside [0,1]", alpha()));
    if (D != 2) throw std::invalid_argument("the slab simulator supports D = 2");
    if (Nx < 4) throw std::invalid_argument("Nx must be at least 4");
    if (Q < 4 || Q % 2) throw std::invalid_argument("Q must be even and at least 4");
    if (!(cfl > 0 && cfl <= 1)) throw std::invalid_argument("cfl must lie in (0,1]");
    if (dt < 0 || t_final < 0) throw std::invalid_argument("dt and t_final must be nonnegative");
    if (mode < 1) throw std::invalid_argument("mode index is 1-based");
    if (tau != 1 && tau != -1) throw std::invalid_argument("tau must be +1 or -1");
    if (test_order < 0 || test_order > 2) throw std::invalid_argument("test_order must be 0, 1 or 2");
    if (samples_per_period < 4) throw std::invalid_argument("samples_per_period must be at least 4");
    if (!(min_periods > 0) || !(stop_fraction > 0 && stop_fraction < 1) || skip_periods < 0)
      throw std::invalid_argument("bad stopping parameters");
  }
};

// Maxwell wall on one side of the slab. Incoming nodes get
// (1-alpha) g(mirror) + alpha * diffuse, diffuse fixed by zero net mass flux.
struct SlabWallBC {
  std::vector<int> in, out, mirror_of_in;
  Eigen::VectorXd wvn_in, wvn_out;  // w |v_x| on each half
  double flux_norm = 0;             // sum over incoming of w |v_x|
  double alpha = 0;

  template <class Col>
  void apply(const Col& trace, Eigen::VectorXcd& incoming) const {
    cplx out_flux = 0;
    for (size_t j = 0; j < out.size(); ++j) out_flux += wvn_out(j) * trace(out[j]);
    const cplx diffuse = out_flux / flux_norm;
    incoming.resize(in.size());
    for (size_t j = 0; j < in.size(); ++j) incoming(j) = (1 - alpha) * trace(mirror_of_in[j]) + alpha * diffuse;
  }
};

// s = +1 for the wall at x = 0 (inflow has v_x > 0), -1 for x = 1
inline SlabWallBC make_wall_bc(const VelocityGrid& G, int s, double alpha) {
  SlabWallBC b;
  b.alpha = alpha;
  std::vector<double> wi, wo;
  for (int q = 0; q < G.size(); ++q) {
    const double vx = G.V(q, 0);
    if (s * vx > 0) {
      b.in.push_back(q);
      b.mirror_of_in.push_back(G.mirror[0][q]);
      wi.push_back(G.w(q) * std::abs(vx));
    } else if (s * vx < 0) {
      b.out.push_back(q);
      wo.push_back(G.w(q) * std::abs(vx));
    }
  }
  b.wvn_in = Eigen::Map<Eigen::VectorXd>(wi.data(), wi.size());
  b.wvn_out = Eigen::Map<Eigen::VectorXd>(wo.data(), wo.size());
  b.flux_norm = b.wvn_in.sum();
  return b;
}

struct KineticField {
  Eigen::MatrixXcd g;  // velocity nodes x cells
  double t = 0;
};

struct SimDiagnostics {
  double mass_drift = 0;        // max |m(t) - m(0)| / max(1, |m(0)|)
  double entropy_increase = 0;  // max step increase of E relative to E(0)
  double wall_mass_flux = 0;    // max |net mass flux| through a wall, relative to the outgoing flux scale
  double wall_entropy_balance = 0;  // max (incoming - outgoing) energy flux at the walls, relative
  double wall_entropy_defect = 0;   // max |incoming - outgoing| energy flux, relative; zero for specular walls
  long steps = 0;
};

class SlabSimulator {
 public:
  explicit SlabSimulator(const SimConfig& c) : cfg_(c) {
    cfg_.check();
    model_ = std::make_shared<CollisionModel>(
        make_collision(make_velocity_grid(cfg_.D, cfg_.Q, VelocityRule::HalfRange), cfg_.collision));
    const VelocityGrid& G = model_->grid;
    N_ = G.size();
    dx_ = 1.0 / cfg_.Nx;
    vx_ = G.V.col(0);
    vmax_ = vx_.cwiseAbs().maxCoeff();
    left_ = make_wall_bc(G, +1, cfg_.alpha());
    right_ = make_wall_bc(G, -1, cfg_.alpha());
    w_ = G.w;
    WEt_ = (G.w.asDiagonal() * G.E).transpose();
    WEat_ = (G.w.asDiagonal() * model_->Ea).transpose();
    WEbt_ = (G.w.asDiagonal() * model_->Eb).transpose();
    Er_ = G.E;
  }

  const SimConfig& config() const { return cfg_; }
  const CollisionModel& model() const { return *model_; }
  int cells() const { return cfg_.Nx; }
  double dx() const { return dx_; }
  double x(int i) const { return (i + 0.5) * dx_; }
  double dt_max() const { return cfg_.cfl * dx_ * cfg_.eps / vmax_; }
  const SlabWallBC& wall(int s) const { return s == 0 ? left_ : right_; }

  KineticField zero_field() const { return {Eigen::MatrixXcd::Zero(N_, cfg_.Nx), 0.0}; }

  cplx mass(const KineticField& f) const { return (w_.transpose().cast<cplx>() * f.g).sum() * dx_; }

  double entropy(const KineticField& f) const {
    return 0.5 * dx_ * (w_.asDiagonal() * f.g.cwiseAbs2()).sum();
  }

  // exp(-h L) on every cell, h = dt / eps^2
  void relax(KineticField& f, double dt) const {
    const double h = dt / (cfg_.eps * cfg_.eps);
    const double f0 = std::exp(-h * model_->rate_0()), fa = std::exp(-h * model_->rate_A()),
                 fb = std::exp(-h * model_->rate_B());
    // project before scaling; the A and B parts live in the complement of the invariants
    const Eigen::MatrixXcd cP = WEt_ * f.g;
    Eigen::MatrixXcd cA, cB;
    if (fa != f0) cA = WEat_ * f.g;
    if (fb != f0) cB = WEbt_ * f.g;
    f.g *= f0;
    f.g.noalias() += Er_ * (cP * (1 - f0));
    if (fa != f0) f.g.noalias() += model_->Ea * (cA * (fa - f0));
    if (fb != f0) f.g.noalias() += model_->Eb * (cB * (fb - f0));
  }

  // upwind (1/eps) v_x d/dx with Maxwell inflow at both walls
  void transport(KineticField& f, double dt, SimDiagnostics* diag = nullptr) const {
    const int Nx = cfg_.Nx;
    Eigen::VectorXcd inL, inR;
    left_.apply(f.g.col(0), inL);
    right_.apply(f.g.col(Nx - 1), inR);
    if (diag) wall_bookkeeping(f, inL, inR, *diag);
    std::vector<cplx> ghostL(N_, 0.0), ghostR(N_, 0.0);
    for (size_t j = 0; j < left_.in.size(); ++j) ghostL[left_.in[j]] = inL(j);
    for (size_t j = 0; j < right_.in.size(); ++j) ghostR[right_.in[j]] = inR(j);
    Eigen::MatrixXcd& g = f.g;
    for (int q = 0; q < N_; ++q) {
      const double c = dt * vx_(q) / (cfg_.eps * dx_);
      if (c > 0) {
        for (int i = Nx - 1; i > 0; --i) g(q, i) -= c * (g(q, i) - g(q, i - 1));
        g(q, 0) -= c * (g(q, 0) - ghostL[q]);
      } else if (c < 0) {
        for (int i = 0; i < Nx - 1; ++i) g(q, i) += c * (g(q, i) - g(q, i + 1));
        g(q, Nx - 1) += c * (g(q, Nx - 1) - ghostR[q]);
      }
    }
  }

 private:
  void wall_bookkeeping(const KineticField& f, const Eigen::VectorXcd& inL, const Eigen::VectorXcd& inR,
                        SimDiagnostics& d) const {
    auto side = [&](const SlabWallBC& b, const Eigen::VectorXcd& in, int col) {
      cplx fo = 0, fi = 0;
      double eo = 0, ei = 0;
      for (size_t j = 0; j < b.out.size(); ++j) {
        const cplx v = f.g(b.out[j], col);
        fo += b.wvn_out(j) * v;
        eo += b.wvn_out(j) * std::norm(v);
      }
      for (size_t j = 0; j < b.in.size(); ++j) {
        fi += b.wvn_in(j) * in(j);
        ei += b.wvn_in(j) * std::norm(in(j));
      }
      double scale = 0;
      for (size_t j = 0; j < b.out.size(); ++j) scale += b.wvn_out(j) * std::abs(f.g(b.out[j], col));
      if (scale > 0) d.wall_mass_flux = std::max(d.wall_mass_flux, std::abs(fi - fo) / scale);
      if (eo > 0) {
        d.wall_entropy_balance = std::max(d.wall_entropy_balance, (ei - eo) / eo);
        d.wall_entropy_defect = std::max(d.wall_entropy_defect, std::abs(ei - eo) / eo);
      }
    };
    side(left_, inL, 0);
    side(right_, inR, cfg_.Nx - 1);
  }

  SimConfig cfg_;
  std::shared_ptr<CollisionModel> model_;
  int N_ = 0;
  double dx_ = 0, vmax_ = 0;
  Eigen::VectorXd vx_, w_;
  Eigen::MatrixXd WEt_, WEat_, WEbt_, Er_;
  SlabWallBC left_, right_;
};

// Strang step: half relaxation, full transport, half relaxation
inline void strang_step(const SlabSimulator& s, KineticField& f, double dt, SimDiagnostics* d = nullptr) {
  s.relax(f, 0.5 * dt);
  s.transport(f, dt, d);
  s.relax(f, 0.5 * dt);
  f.t += dt;
}

struct DecayFit {
  double A = 0, sigma = 0, omega = 0;
  double r2 = 0, r2_phase = 0;
  double rms_log = 0;  // fit residual of log|b|
  int samples = 0;
  bool inconclusive = true;
};

// log|b| ~ log A + sigma t, unwrapped arg b ~ phi0 - omega t (omega >= 0 reported as |slope|)
inline DecayFit fit_decay(const std::vector<double>& t, const std::vector<cplx>& b, double t_start = 0) {
  std::vector<double> tt, la, ph;
  double prev = 0, shift = 0;
  bool first = true;
  for (size_t j = 0; j < t.size(); ++j) {
    double a = std::arg(b[j]);
    if (!first) {
      while (a + shift - prev > std::numbers::pi) shift -= 2 * std::numbers::pi;
      while (a + shift - prev < -std::numbers::pi) shift += 2 * std::numbers::pi;
    }
    first = false;
    prev = a + shift;
    if (t[j] < t_start || !(std::abs(b[j]) > 0)) continue;
    tt.push_back(t[j]);
    la.push_back(std::log(std::abs(b[j])));
    ph.push_back(prev);
  }
  DecayFit r;
  r.samples = static_cast<int>(tt.size());
  if (r.samples < 3) return r;
  auto linfit = [&](const std::vector<double>& y, double& slope, double& icpt, double& r2, double& rms) {
    Eigen::MatrixXd X(tt.size(), 2);
    Eigen::VectorXd Y(tt.size());
    for (size_t j = 0; j < tt.size(); ++j) {
      X(j, 0) = 1;
      X(j, 1) = tt[j];
      Y(j) = y[j];
    }
    Eigen::Vector2d c = X.colPivHouseholderQr().solve(Y);
    icpt = c(0);
    slope = c(1);
    const Eigen::VectorXd res = Y - X * c;
    const double ss = (Y.array() - Y.mean()).square().sum();
    r2 = ss > 0 ? 1 - res.squaredNorm() / ss : 1.0;
    rms = std::sqrt(res.squaredNorm() / Y.size());
  };
  double icpt, slope, rms_ph;
  linfit(la, r.sigma, icpt, r.r2, r.rms_log);
  r.A = std::exp(icpt);
  linfit(ph, slope, icpt, r.r2_phase, rms_ph);
  r.omega = std::abs(slope);
  r.inconclusive = !(r.r2 >= 0.9);
  return r;
}

struct SimResult {
  SimConfig config;
  double alpha = 0, dt = 0, period = 0;
  std::vector<double> t;
  std::vector<cplx> b;
  std::vector<double> E;
  cplx b0 = 0;
  DecayFit fit;
  cplx il[3] = {0, 0, 0};
  double lambda0 = 0;
  double sigma_pred = 0, omega_pred = 0;
  double sigma_pred_next = 0;  // with the order-one eigenvalue correction added
  SimDiagnostics diag;
  double seconds = 0;
};

// The projecting ansatz (and its eigenvalue corrections) on the simulator grid.
// A specular wall carries no layers, so only the interior term is used there.
inline SlabEigenpair simulator_eigenpair(const SimConfig& c) {
  AssemblyOptions o;
  o.collision = c.collision;
  o.velocity_points = c.Q;
  o.chi = c.chi > 0 ? c.chi : 1.0;
  o.mode = c.mode;
  o.tau = c.tau;
  o.order = 2;
  o.cutoff = c.cutoff;
  return build_slab_eigenpair(o);
}

inline Eigen::MatrixXcd sample_ansatz(const SlabSimulator& s, const SlabEigenpair& a, double eps, int order,
                                      bool interior_only) {
  const int N = s.model().grid.size();
  Eigen::MatrixXcd h(N, s.cells());
  SlabEigenpair t = a;
  t.order = order;
  for (int i = 0; i < s.cells(); ++i) {
    if (interior_only) {
      VecC v = VecC::Zero(N);
      for (int m = 0; m <= order; ++m) v += std::pow(std::sqrt(eps), m) * detail::ev(a.interior[m], s.x(i), N);
      h.col(i) = v;
    } else {
      h.col(i) = evaluate_ansatz(t, eps, s.x(i)).g;
    }
  }
  return h;
}

// b = int sum_q w g conj(h) dx
inline cplx mode_amplitude(const SlabSimulator& s, const KineticField& f, const Eigen::MatrixXcd& h) {
  const Eigen::VectorXd& w = s.model().grid.w;
  return (w.cast<cplx>().asDiagonal() * f.g).cwiseProduct(h.conjugate()).sum() * s.dx();
}

inline KineticField init_state(const SlabSimulator& s, const SlabEigenpair& a) {
  const SimConfig& c = s.config();
  KineticField f = s.zero_field();
  if (c.init == SimInit::Mode) f.g = sample_ansatz(s, a, c.eps, 0, true);
  if (c.init == SimInit::Ansatz) f.g = sample_ansatz(s, a, c.eps, c.test_order, c.chi == 0);
  return f;
}

inline SimResult run_and_fit(const SimConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  SlabSimulator sim(cfg);
  const SimConfig& c = sim.config();
  const SlabEigenpair a = simulator_eigenpair(c);
  const bool specular = c.chi == 0;
  const Eigen::MatrixXcd h = sample_ansatz(sim, a, c.eps, specular ? 0 : c.test_order, specular);

  SimResult r;
  r.config = c;
  r.alpha = c.alpha();
  for (int m = 0; m < 3; ++m) r.il[m] = a.il[m];
  r.lambda0 = std::abs(a.il[0].imag());
  const double se = std::sqrt(c.eps);
  const double kill = specular ? 0.0 : 1.0;  // boundary damping is proportional to chi
  r.sigma_pred = kill * a.il[1].real() / se;
  r.omega_pred = std::abs(a.il[0].imag() / c.eps + kill * a.il[1].imag() / se);
  // specular walls carry no layers, so the next order is interior dissipation alone
  r.sigma_pred_next = r.sigma_pred + (specular ? a.dissipation.real() : a.il[2].real());
  r.period = 2 * std::numbers::pi * c.eps / r.lambda0;

  const double sample_dt = r.period / c.samples_per_period;
  double dt = c.dt > 0 ? c.dt : sim.dt_max();
  if (dt > sim.dt_max() * (1 + 1e-12))
    throw std::invalid_argument(fmt::format("dt {} violates the transport CFL bound {}", dt, sim.dt_max()));
  const long per_sample = std::max(1L, static_cast<long>(std::ceil(sample_dt / dt - 1e-9)));
  dt = sample_dt / per_sample;
  r.dt = dt;

  KineticField f = init_state(sim, a);
  const cplx m0 = sim.mass(f);
  double E = sim.entropy(f);
  const double E0 = E;
  r.b0 = mode_amplitude(sim, f, h);
  r.t.push_back(0);
  r.b.push_back(r.b0);
  r.E.push_back(E);
  const double t_end = c.t_final > 0 ? c.t_final : c.min_periods * r.period;
  const double floor = c.stop_fraction * std::abs(r.b0);
  while (f.t < t_end * (1 - 1e-12)) {
    // Strang steps with the adjacent half relaxations merged; exact relaxation composes
    sim.relax(f, 0.5 * dt);
    for (long k = 0; k < per_sample; ++k) {
      sim.transport(f, dt, &r.diag);
      sim.relax(f, k + 1 < per_sample ? dt : 0.5 * dt);
      f.t += dt;
      ++r.diag.steps;
      const double En = sim.entropy(f);
      if (!std::isfinite(En)) throw std::runtime_error(fmt::format("non-finite state at t = {}", f.t));
      if (E0 > 0) r.diag.entropy_increase = std::max(r.diag.entropy_increase, (En - E) / E0);
      E = En;
      r.diag.mass_drift = std::max(r.diag.mass_drift, std::abs(sim.mass(f) - m0) / std::max(1.0, std::abs(m0)));
    }
    r.t.push_back(f.t);
    r.b.push_back(mode_amplitude(sim, f, h));
    r.E.push_back(E);
    if (c.t_final == 0 && std::abs(r.b.back()) < floor) break;
  }
  r.fit = fit_decay(r.t, r.b, c.skip_periods * r.period);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline void write_trace_csv(const SimResult& r, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "t,re_b,im_b,abs_b,E\n";
  for (size_t j = 0; j < r.t.size(); ++j)
    os << fmt::format("{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}\n", r.t[j], r.b[j].real(), r.b[j].imag(),
                      std::abs(r.b[j]), r.E[j]);
}

inline nlohmann::json sim_config_json(const SimConfig& c) {
  return {{"eps", c.eps},
          {"chi", c.chi},
          {"D", c.D},
          {"Nx", c.Nx},
          {"Q", c.Q},
          {"collision", to_string(c.collision.kind)},
          {"cfl", c.cfl},
          {"mode", c.mode},
          {"tau", c.tau},
          {"init", to_string(c.init)},
          {"test_order", c.test_order},
          {"cutoff", to_string(c.cutoff)},
          {"samples_per_period", c.samples_per_period},
          {"min_periods", c.min_periods},
          {"stop_fraction", c.stop_fraction},
          {"t_final", c.t_final}};
}

inline nlohmann::json fit_json(const SimResult& r) {
  auto cj = [](cplx z) { return nlohmann::json::array({z.real(), z.imag()}); };
  return {{"sigma_fit", r.fit.sigma},
          {"sigma_pred", r.sigma_pred},
          {"sigma_pred_with_next_order", r.sigma_pred_next},
          {"omega_fit", r.fit.omega},
          {"omega_pred", r.omega_pred},
          {"r2", r.fit.r2},
          {"r2_phase", r.fit.r2_phase},
          {"fit_rms_log", r.fit.rms_log},
          {"fit_samples", r.fit.samples},
          {"inconclusive", r.fit.inconclusive},
          {"amplitude", r.fit.A},
          {"b0", cj(r.b0)},
          {"alpha", r.alpha},
          {"dt", r.dt},
          {"period", r.period},
          {"lambda0", r.lambda0},
          {"ilambda", {cj(r.il[0]), cj(r.il[1]), cj(r.il[2])}},
          {"steps", r.diag.steps},
          {"mass_drift", r.diag.mass_drift},
          {"entropy_increase", r.diag.entropy_increase},
          {"wall_mass_flux", r.diag.wall_mass_flux},
          {"wall_entropy_balance", r.diag.wall_entropy_balance},
          {"wall_entropy_defect", r.diag.wall_entropy_defect},
          {"t_end", r.t.empty() ? 0.0 : r.t.back()},
          {"config", sim_config_json(r.config)}};
}

}  // namespace kdamp
