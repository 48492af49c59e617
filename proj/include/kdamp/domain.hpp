#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "quadrature.hpp"

namespace kdamp {

using Vec2 = Eigen::Vector2d;

enum class DomainKind { Slab, Rectangle, Disk };

inline std::string to_string(DomainKind k) {
  switch (k) {
    case DomainKind::Slab: return "slab";
    case DomainKind::Rectangle: return "rectangle";
    case DomainKind::Disk: return "disk";
  }
  return "?";
}

inline DomainKind parse_domain_kind(const std::string& s) {
  if (s == "slab") return DomainKind::Slab;
  if (s == "rectangle" || s == "square") return DomainKind::Rectangle;
  if (s == "disk") return DomainKind::Disk;
  throw std::invalid_argument("unsupported domain kind '" + s + "'");
}

struct DomainSpec {
  DomainKind kind = DomainKind::Slab;
  double Lx = 1.0, Ly = 1.0;  // rectangle
  double R = 1.0 / std::sqrt(std::numbers::pi);
  int D = 2;  // velocity dimension
  bool auto_normalize = false;
};

struct BoundaryPoint {
  int chart = 0;  // slab: 0 at x1=0, 1 at x1=1; rectangle: 0 bottom,1 right,2 top,3 left; disk: 0
  double s = 0;   // arclength along the chart (angle for the disk)
  Vec2 x = Vec2::Zero();
  Vec2 n = Vec2::Zero();  // outward unit normal
  Vec2 t = Vec2::Zero();  // unit tangent, counterclockwise
};

struct WeightedPoint {
  BoundaryPoint p;
  double w;
};

struct InteriorNode {
  Vec2 x;
  double w;
};

class Domain {
 public:
  DomainKind kind = DomainKind::Slab;
  double Lx = 1, Ly = 1, R = 1 / std::sqrt(std::numbers::pi);
  int D = 2;

  double volume() const {
    switch (kind) {
      case DomainKind::Slab: return 1.0;
      case DomainKind::Rectangle: return Lx * Ly;
      case DomainKind::Disk: return std::numbers::pi * R * R;
    }
    return 0;
  }

  double boundary_measure() const {
    switch (kind) {
      case DomainKind::Slab: return 2.0;
      case DomainKind::Rectangle: return 2 * (Lx + Ly);
      case DomainKind::Disk: return 2 * std::numbers::pi * R;
    }
    return 0;
  }

  double delta() const {
    switch (kind) {
      case DomainKind::Slab: return 0.5;
      case DomainKind::Rectangle: return std::min(Lx, Ly) / 2;
      case DomainKind::Disk: return R / 2;
    }
    return 0;
  }

  bool contains(const Vec2& x, double tol = 1e-12) const {
    switch (kind) {
      case DomainKind::Slab: return x(0) >= -tol && x(0) <= 1 + tol;
      case DomainKind::Rectangle:
        return x(0) >= -tol && x(0) <= Lx + tol && x(1) >= -tol && x(1) <= Ly + tol;
      case DomainKind::Disk: return x.norm() <= R + tol;
    }
    return false;
  }

  double distance(const Vec2& x) const {
    if (!contains(x)) throw std::domain_error("distance: point outside the domain");
    switch (kind) {
      case DomainKind::Slab: return std::min(x(0), 1 - x(0));
      case DomainKind::Rectangle: return std::min({x(0), Lx - x(0), x(1), Ly - x(1)});
      case DomainKind::Disk: return R - x.norm();
    }
    return 0;
  }

  BoundaryPoint boundary_point(int chart, double s) const {
    BoundaryPoint b;
    b.chart = chart;
    b.s = s;
    switch (kind) {
      case DomainKind::Slab:
        b.x = Vec2(chart == 0 ? 0.0 : 1.0, s);
        b.n = Vec2(chart == 0 ? -1.0 : 1.0, 0.0);
        break;
      case DomainKind::Rectangle:
        switch (chart) {
          case 0: b.x = Vec2(s, 0); b.n = Vec2(0, -1); break;
          case 1: b.x = Vec2(Lx, s); b.n = Vec2(1, 0); break;
          case 2: b.x = Vec2(Lx - s, Ly); b.n = Vec2(0, 1); break;
          case 3: b.x = Vec2(0, Ly - s); b.n = Vec2(-1, 0); break;
          default: throw std::out_of_range("rectangle chart");
        }
        break;
      case DomainKind::Disk:
        b.x = R * Vec2(std::cos(s), std::sin(s));
        b.n = Vec2(std::cos(s), std::sin(s));
        break;
    }
    b.t = Vec2(-b.n(1), b.n(0));
    return b;
  }

  BoundaryPoint project_boundary(const Vec2& x) const {
    const double d = distance(x);
    if (!(d < delta())) throw std::domain_error("project_boundary: outside tubular neighborhood");
    switch (kind) {
      case DomainKind::Slab:
        if (std::abs(x(0) - (1 - x(0))) < 1e-14) throw std::domain_error("project_boundary: ambiguous");
        return x(0) < 0.5 ? boundary_point(0, x(1)) : boundary_point(1, x(1));
      case DomainKind::Rectangle: {
        double ds[4] = {x(1), Lx - x(0), Ly - x(1), x(0)};
        int best = 0;
        for (int i = 1; i < 4; ++i)
          if (ds[i] < ds[best]) best = i;
        for (int i = 0; i < 4; ++i)
          if (i != best && std::abs(ds[i] - ds[best]) < 1e-14)
            throw std::domain_error("project_boundary: ambiguous nearest edge");
        switch (best) {
          case 0: return boundary_point(0, x(0));
          case 1: return boundary_point(1, x(1));
          case 2: return boundary_point(2, Lx - x(0));
          default: return boundary_point(3, Ly - x(1));
        }
      }
      case DomainKind::Disk: {
        if (x.norm() < 1e-14) throw std::domain_error("project_boundary: disk center is equidistant");
        double phi = std::atan2(x(1), x(0));
        if (phi < 0) phi += 2 * std::numbers::pi;
        return boundary_point(0, phi);
      }
    }
    throw std::logic_error("unreachable");
  }

  // gradient of the distance function (interior of the tubular neighborhood)
  Vec2 grad_distance(const Vec2& x) const { return -project_boundary(x).n; }

  std::vector<WeightedPoint> boundary_quadrature(int order) const {
    if (order < 1) throw std::invalid_argument("boundary_quadrature: order < 1");
    std::vector<WeightedPoint> q;
    switch (kind) {
      case DomainKind::Slab:
        q.push_back({boundary_point(0, 0.5), 1.0});
        q.push_back({boundary_point(1, 0.5), 1.0});
        break;
      case DomainKind::Rectangle: {
        const double len[4] = {Lx, Ly, Lx, Ly};
        for (int c = 0; c < 4; ++c) {
          Rule1D g = gauss_legendre(order, 0.0, len[c]);
          for (std::size_t i = 0; i < g.size(); ++i) q.push_back({boundary_point(c, g.x[i]), g.w[i]});
        }
        break;
      }
      case DomainKind::Disk: {
        const double h = 2 * std::numbers::pi / order;
        for (int i = 0; i < order; ++i) q.push_back({boundary_point(0, (i + 0.5) * h), h * R});
        break;
      }
    }
    return q;
  }

  // quadrature of dx over Omega (tangential cross-section of the slab has unit measure)
  std::vector<InteriorNode> interior_quadrature(int order) const {
    std::vector<InteriorNode> q;
    switch (kind) {
      case DomainKind::Slab: {
        Rule1D g = gauss_legendre(order, 0.0, 1.0);
        for (std::size_t i = 0; i < g.size(); ++i) q.push_back({Vec2(g.x[i], 0.5), g.w[i]});
        break;
      }
      case DomainKind::Rectangle: {
        Rule1D gx = gauss_legendre(order, 0.0, Lx), gy = gauss_legendre(order, 0.0, Ly);
        for (std::size_t i = 0; i < gx.size(); ++i)
          for (std::size_t j = 0; j < gy.size(); ++j)
            q.push_back({Vec2(gx.x[i], gy.x[j]), gx.w[i] * gy.w[j]});
        break;
      }
      case DomainKind::Disk: {
        Rule1D gr = gauss_legendre(order, 0.0, R);
        const int na = 2 * order + 8;
        const double h = 2 * std::numbers::pi / na;
        for (std::size_t i = 0; i < gr.size(); ++i)
          for (int j = 0; j < na; ++j) {
            double phi = (j + 0.5) * h;
            q.push_back({gr.x[i] * Vec2(std::cos(phi), std::sin(phi)), gr.w[i] * gr.x[i] * h});
          }
        break;
      }
    }
    return q;
  }
};

inline Domain make_domain(const DomainSpec& spec) {
  Domain d;
  d.kind = spec.kind;
  d.D = spec.D;
  if (spec.D < 2 || spec.D > 3) throw std::invalid_argument("make_domain: D must be 2 or 3");
  switch (spec.kind) {
    case DomainKind::Slab: break;
    case DomainKind::Rectangle: {
      if (!(spec.Lx > 0 && spec.Ly > 0)) throw std::invalid_argument("make_domain: non-positive size");
      double a = spec.Lx * spec.Ly;
      if (std::abs(a - 1) > 1e-12) {
        if (!spec.auto_normalize) throw std::invalid_argument("make_domain: rectangle area must be 1");
        double f = 1 / std::sqrt(a);
        d.Lx = spec.Lx * f;
        d.Ly = spec.Ly * f;
      } else {
        d.Lx = spec.Lx;
        d.Ly = spec.Ly;
      }
      break;
    }
    case DomainKind::Disk: {
      if (!(spec.R > 0)) throw std::invalid_argument("make_domain: non-positive radius");
      double a = std::numbers::pi * spec.R * spec.R;
      if (std::abs(a - 1) > 1e-12) {
        if (!spec.auto_normalize) throw std::invalid_argument("make_domain: disk area must be 1");
        d.R = 1 / std::sqrt(std::numbers::pi);
      } else {
        d.R = spec.R;
      }
      break;
    }
  }
  return d;
}

inline Vec2 tangential_gradient(const Vec2& gradPsi, const BoundaryPoint& b) {
  return gradPsi - gradPsi.dot(b.n) * b.n;
}

}  // namespace kdamp
