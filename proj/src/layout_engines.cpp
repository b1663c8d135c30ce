#include "layoutgen/layout.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace layoutgen {

namespace {

constexpr std::array<ParamRange, 3> kSpringRanges{{
    {"link_distance", 1.0, 100.0, false, false},
    {"charge_strength", -100.0, -1.0, false, false},
    {"velocity_decay", 0.1, 0.7, false, false},
}};

constexpr std::array<ParamRange, 2> kLinLogRanges{{
    {"gravity", 1.0, 10.0, false, false},
    {"scaling_ratio", 1.0, 10.0, false, false},
}};

constexpr std::array<ParamRange, 4> kExponentRanges{{
    {"repulsive_strength", 0.0, 5.0, true, false},
    {"repulsive_exponent", 0.0, 5.0, false, false},
    {"attractive_strength", 0.0, 5.0, true, false},
    {"attractive_exponent", 0.0, 5.0, false, false},
}};

void check_range(const ParamRange& r, double v) {
  if (!std::isfinite(v) || !r.contains(v)) {
    throw std::out_of_range(std::string(r.name) + " = " + std::to_string(v) + " outside " + (r.lo_open ? "(" : "[") +
                            std::to_string(r.lo) + ", " + std::to_string(r.hi) + (r.hi_open ? ")" : "]"));
  }
}

double sample_range(const ParamRange& r, std::mt19937_64& rng) {
  // uniform_real_distribution draws [lo, hi); flip it for (lo, hi].
  std::uniform_real_distribution<double> u(r.lo, r.hi);
  const double x = u(rng);
  return r.lo_open ? r.hi - (x - r.lo) : x;
}

bool sample_flag(std::mt19937_64& rng) { return std::bernoulli_distribution(0.5)(rng); }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Positions random_start(std::size_t n, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Positions p(static_cast<Eigen::Index>(n), 2);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    p(i, 0) = u(rng) * scale;
    p(i, 1) = u(rng) * scale;
  }
  return p;
}

// Fixed pseudo-random unit direction for a coincident pair.
void tie_direction(std::size_t i, std::size_t j, double& dx, double& dy) {
  const double angle = static_cast<double>(splitmix64(i * 1000003ULL + j) % 6283) / 1000.0;
  dx = std::cos(angle);
  dy = std::sin(angle);
}

enum class StepRule {
  capped,     // move by the force, at most the temperature
  unit_step,  // always move exactly the temperature along the force
};

/// Shared integrator: linear cooling from t0 to 0 over kEngineIterations.
/// `forces` fills an N x 2 force matrix for the current positions.
template <typename ForceFn>
Positions integrate(Positions p, double t0, StepRule rule, double velocity_keep, ForceFn&& forces) {
  const Eigen::Index n = p.rows();
  Positions f(n, 2);
  Positions velocity = Positions::Zero(n, 2);
  for (int it = 0; it < kEngineIterations; ++it) {
    const double t = t0 * (1.0 - static_cast<double>(it) / kEngineIterations);
    f.setZero();
    forces(p, f);
    if (!f.allFinite()) {
      throw LayoutEngineError("non-finite force at iteration " + std::to_string(it));
    }
    velocity = velocity_keep * velocity + f;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double len = velocity.row(i).norm();
      if (len == 0.0) continue;
      const double step = rule == StepRule::unit_step ? t : std::min(len, t);
      velocity.row(i) *= step / len;
      p.row(i) += velocity.row(i);
    }
  }
  if (!p.allFinite()) throw LayoutEngineError("non-finite positions after integration");
  const RowVector centroid = p.colwise().mean();
  p.rowwise() -= centroid;
  return p;
}

/// Adaptive-speed integrator for mass-weighted forces. Each node moves by
/// speed_i * F_i, where a global speed tracks traction / swing (how
/// consistently forces point the same way between iterations) and a node's
/// own swing slows it down, so stiff configurations do not oscillate.
/// Steps are still capped by the linearly cooling temperature.
template <typename ForceFn>
Positions integrate_adaptive(Positions p, double t0, std::span<const double> mass, ForceFn&& forces) {
  constexpr double jitter_tolerance = 1.0;
  constexpr double max_rise = 1.5;
  constexpr double node_speed_cap = 10.0;
  const Eigen::Index n = p.rows();
  Positions f(n, 2), previous = Positions::Zero(n, 2);
  double speed = 1.0;
  for (int it = 0; it < kEngineIterations; ++it) {
    const double t = t0 * (1.0 - static_cast<double>(it) / kEngineIterations);
    f.setZero();
    forces(p, f);
    if (!f.allFinite()) {
      throw LayoutEngineError("non-finite force at iteration " + std::to_string(it));
    }
    std::vector<double> swing(static_cast<std::size_t>(n));
    double total_swing = 0.0, total_traction = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double m = mass[static_cast<std::size_t>(i)];
      swing[static_cast<std::size_t>(i)] = (f.row(i) - previous.row(i)).norm();
      total_swing += m * swing[static_cast<std::size_t>(i)];
      total_traction += 0.5 * m * (f.row(i) + previous.row(i)).norm();
    }
    if (it > 0 && total_swing > 0.0) {
      speed = std::min(jitter_tolerance * total_traction / total_swing, max_rise * speed);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const double len = f.row(i).norm();
      if (len == 0.0) continue;
      const double node_speed =
          std::min(speed / (1.0 + speed * std::sqrt(swing[static_cast<std::size_t>(i)])), node_speed_cap / len);
      const double step = std::min(node_speed * len, t);
      p.row(i) += f.row(i) * (step / len);
    }
    previous = f;
  }
  if (!p.allFinite()) throw LayoutEngineError("non-finite positions after integration");
  const RowVector centroid = p.colwise().mean();
  p.rowwise() -= centroid;
  return p;
}

// Pairwise loop over i < j with a distance floor; `fn(i, j, dx, dy, d)`
// receives the unit vector from j to i.
template <typename Fn>
void for_each_pair(const Positions& p, double floor, Fn&& fn) {
  const Eigen::Index n = p.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double dx = p(i, 0) - p(j, 0), dy = p(i, 1) - p(j, 1);
      double d = std::sqrt(dx * dx + dy * dy);
      if (d <= floor) {
        tie_direction(static_cast<std::size_t>(i), static_cast<std::size_t>(j), dx, dy);
        d = floor;
      } else {
        dx /= d;
        dy /= d;
      }
      fn(i, j, dx, dy, d);
    }
  }
}

template <typename Fn>
void for_each_edge(const Graph& g, const Positions& p, double floor, Fn&& fn) {
  for (auto [u, v] : g.edges()) {
    double dx = p(u, 0) - p(v, 0), dy = p(u, 1) - p(v, 1);
    double d = std::sqrt(dx * dx + dy * dy);
    if (d <= floor) {
      tie_direction(static_cast<std::size_t>(u), static_cast<std::size_t>(v), dx, dy);
      d = floor;
    } else {
      dx /= d;
      dy /= d;
    }
    fn(u, v, dx, dy, d);
  }
}

void require_nonempty(const Graph& g) {
  if (g.node_count() == 0) throw std::invalid_argument("layout of an empty graph");
}

}  // namespace

std::string_view engine_name(Engine e) {
  switch (e) {
    case Engine::spring: return "spring";
    case Engine::linlog_gravity: return "linlog-gravity";
    case Engine::exponent_force: return "exponent-force";
  }
  return "unknown";
}

Engine engine_from_name(std::string_view name) {
  for (Engine e : all_engines()) {
    if (engine_name(e) == name) return e;
  }
  throw std::invalid_argument("unknown layout engine '" + std::string(name) + "'");
}

std::vector<Engine> all_engines() { return {Engine::spring, Engine::linlog_gravity, Engine::exponent_force}; }

std::span<const ParamRange> numeric_ranges(Engine e) {
  switch (e) {
    case Engine::spring: return kSpringRanges;
    case Engine::linlog_gravity: return kLinLogRanges;
    case Engine::exponent_force: return kExponentRanges;
  }
  return {};
}

Engine engine_of(const LayoutParams& p) {
  return std::visit(
      [](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, SpringParams>) return Engine::spring;
        else if constexpr (std::is_same_v<T, LinLogParams>) return Engine::linlog_gravity;
        else return Engine::exponent_force;
      },
      p);
}

LayoutParams default_params(Engine e) {
  switch (e) {
    case Engine::spring: return SpringParams{};
    case Engine::linlog_gravity: return LinLogParams{};
    case Engine::exponent_force: return ExponentForceParams{};
  }
  throw std::invalid_argument("unknown engine");
}

void validate(const LayoutParams& params) {
  std::visit(
      [](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, SpringParams>) {
          check_range(kSpringRanges[0], p.link_distance);
          check_range(kSpringRanges[1], p.charge_strength);
          check_range(kSpringRanges[2], p.velocity_decay);
        } else if constexpr (std::is_same_v<T, LinLogParams>) {
          check_range(kLinLogRanges[0], p.gravity);
          check_range(kLinLogRanges[1], p.scaling_ratio);
        } else {
          check_range(kExponentRanges[0], p.repulsive_strength);
          check_range(kExponentRanges[1], p.repulsive_exponent);
          check_range(kExponentRanges[2], p.attractive_strength);
          check_range(kExponentRanges[3], p.attractive_exponent);
        }
      },
      params);
}

nlohmann::json params_to_json(const LayoutParams& params) {
  return std::visit(
      [](const auto& p) -> nlohmann::json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, SpringParams>) {
          return {{"link_distance", p.link_distance},
                  {"charge_strength", p.charge_strength},
                  {"velocity_decay", p.velocity_decay}};
        } else if constexpr (std::is_same_v<T, LinLogParams>) {
          return {{"gravity", p.gravity},
                  {"scaling_ratio", p.scaling_ratio},
                  {"adjust_sizes", p.adjust_sizes},
                  {"linlog", p.linlog},
                  {"outbound_attraction_distribution", p.outbound_attraction_distribution},
                  {"strong_gravity", p.strong_gravity}};
        } else {
          return {{"repulsive_strength", p.repulsive_strength},
                  {"repulsive_exponent", p.repulsive_exponent},
                  {"attractive_strength", p.attractive_strength},
                  {"attractive_exponent", p.attractive_exponent}};
        }
      },
      params);
}

LayoutParams params_from_json(Engine e, const nlohmann::json& j) {
  LayoutParams out;
  switch (e) {
    case Engine::spring:
      out = SpringParams{j.at("link_distance").get<double>(), j.at("charge_strength").get<double>(),
                         j.at("velocity_decay").get<double>()};
      break;
    case Engine::linlog_gravity:
      out = LinLogParams{j.at("gravity").get<double>(),
                         j.at("scaling_ratio").get<double>(),
                         j.at("adjust_sizes").get<bool>(),
                         j.at("linlog").get<bool>(),
                         j.at("outbound_attraction_distribution").get<bool>(),
                         j.at("strong_gravity").get<bool>()};
      break;
    case Engine::exponent_force:
      out = ExponentForceParams{j.at("repulsive_strength").get<double>(), j.at("repulsive_exponent").get<double>(),
                                j.at("attractive_strength").get<double>(), j.at("attractive_exponent").get<double>()};
      break;
  }
  validate(out);
  return out;
}

LayoutParams sample_params(Engine e, std::mt19937_64& rng) {
  switch (e) {
    case Engine::spring: {
      SpringParams p;
      p.link_distance = sample_range(kSpringRanges[0], rng);
      p.charge_strength = sample_range(kSpringRanges[1], rng);
      p.velocity_decay = sample_range(kSpringRanges[2], rng);
      return p;
    }
    case Engine::linlog_gravity: {
      LinLogParams p;
      p.gravity = sample_range(kLinLogRanges[0], rng);
      p.scaling_ratio = sample_range(kLinLogRanges[1], rng);
      p.adjust_sizes = sample_flag(rng);
      p.linlog = sample_flag(rng);
      p.outbound_attraction_distribution = sample_flag(rng);
      p.strong_gravity = sample_flag(rng);
      return p;
    }
    case Engine::exponent_force: {
      ExponentForceParams p;
      p.repulsive_strength = sample_range(kExponentRanges[0], rng);
      p.repulsive_exponent = sample_range(kExponentRanges[1], rng);
      p.attractive_strength = sample_range(kExponentRanges[2], rng);
      p.attractive_exponent = sample_range(kExponentRanges[3], rng);
      return p;
    }
  }
  throw std::invalid_argument("unknown engine");
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t attempt) {
  return splitmix64(splitmix64(splitmix64(master) ^ index) ^ (attempt * 0x632be59bd9b4e019ULL));
}

bool is_valid_layout(const Positions& p) {
  if (p.rows() == 0 || !p.allFinite()) return false;
  for (Eigen::Index i = 1; i < p.rows(); ++i) {
    if (p(i, 0) != p(0, 0) || p(i, 1) != p(0, 1)) return true;
  }
  return false;
}

Layout spring_layout(const Graph& g, const SpringParams& params, std::uint64_t seed) {
  validate(params);
  require_nonempty(g);
  const std::size_t n = g.node_count();
  const double rest = params.link_distance;
  const double charge = -params.charge_strength;
  const double scale = std::max(rest, std::sqrt(charge)) * std::sqrt(static_cast<double>(n));
  const double floor = 1e-6 * scale;

  std::vector<double> stiffness(g.edge_count()), bias(g.edge_count());
  for (std::size_t k = 0; k < g.edge_count(); ++k) {
    const auto [u, v] = g.edges()[k];
    const double du = static_cast<double>(g.degree(u)), dv = static_cast<double>(g.degree(v));
    stiffness[k] = 1.0 / std::min(du, dv);
    bias[k] = du / (du + dv);  // share of the correction applied to v
  }

  Positions p = integrate(random_start(n, scale, seed), 0.1 * scale, StepRule::capped, 1.0 - params.velocity_decay,
                          [&](const Positions& x, Positions& f) {
                            for_each_pair(x, floor, [&](auto i, auto j, double ux, double uy, double d) {
                              const double mag = charge / d;
                              f(i, 0) += mag * ux;
                              f(i, 1) += mag * uy;
                              f(j, 0) -= mag * ux;
                              f(j, 1) -= mag * uy;
                            });
                            std::size_t k = 0;
                            for_each_edge(g, x, floor, [&](int u, int v, double ux, double uy, double d) {
                              // Positive stretch pulls the endpoints together.
                              const double mag = stiffness[k] * (d - rest);
                              f(u, 0) -= mag * (1.0 - bias[k]) * ux;
                              f(u, 1) -= mag * (1.0 - bias[k]) * uy;
                              f(v, 0) += mag * bias[k] * ux;
                              f(v, 1) += mag * bias[k] * uy;
                              ++k;
                            });
                          });
  return Layout{std::move(p), Provenance{Engine::spring, params, seed}};
}

Layout linlog_gravity_layout(const Graph& g, const LinLogParams& params, std::uint64_t seed) {
  validate(params);
  require_nonempty(g);
  if (!g.is_connected()) {
    throw std::invalid_argument("linlog-gravity layout requires a connected graph (use largest_component)");
  }
  const std::size_t n = g.node_count();
  std::vector<double> mass(n);
  double mean_mass = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    mass[v] = static_cast<double>(g.degree(static_cast<int>(v))) + 1.0;
    mean_mass += mass[v] / static_cast<double>(n);
  }
  const double kr = params.scaling_ratio;
  const double kg = params.gravity;
  constexpr double node_radius = 1.0;
  const double scale = std::sqrt(kr) * mean_mass * std::sqrt(static_cast<double>(n));
  const double floor = 1e-6 * scale;

  Positions p = integrate_adaptive(
      random_start(n, scale, seed), 0.1 * scale, mass, [&](const Positions& x, Positions& f) {
        for_each_pair(x, floor, [&](auto i, auto j, double ux, double uy, double d) {
          const double mm = mass[static_cast<std::size_t>(i)] * mass[static_cast<std::size_t>(j)];
          double mag = 0.0;
          if (params.adjust_sizes) {
            const double gap = d - 2.0 * node_radius;
            mag = gap > 0.0 ? kr * mm / gap : 100.0 * kr * mm;
          } else {
            mag = kr * mm / d;
          }
          f(i, 0) += mag * ux;
          f(i, 1) += mag * uy;
          f(j, 0) -= mag * ux;
          f(j, 1) -= mag * uy;
        });
        for_each_edge(g, x, floor, [&](int u, int v, double ux, double uy, double d) {
          const double base = params.linlog ? std::log1p(d) : d;
          const double mu = params.outbound_attraction_distribution ? base / mass[static_cast<std::size_t>(u)] : base;
          const double mv = params.outbound_attraction_distribution ? base / mass[static_cast<std::size_t>(v)] : base;
          f(u, 0) -= mu * ux;
          f(u, 1) -= mu * uy;
          f(v, 0) += mv * ux;
          f(v, 1) += mv * uy;
        });
        const RowVector center = x.colwise().mean();
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
          const double dx = x(i, 0) - center(0), dy = x(i, 1) - center(1);
          const double d = std::sqrt(dx * dx + dy * dy);
          if (d <= floor) continue;
          const double m = mass[static_cast<std::size_t>(i)];
          const double mag = params.strong_gravity ? kg * m * d : kg * m;
          f(i, 0) -= mag * dx / d;
          f(i, 1) -= mag * dy / d;
        }
      });
  return Layout{std::move(p), Provenance{Engine::linlog_gravity, params, seed}};
}

Layout exponent_force_layout(const Graph& g, const ExponentForceParams& params, std::uint64_t seed) {
  validate(params);
  require_nonempty(g);
  const std::size_t n = g.node_count();
  const double c = params.repulsive_strength;
  const double rep_exp = params.repulsive_exponent;
  const double mu = params.attractive_strength;
  const double att_exp = params.attractive_exponent;
  // Two-body balance length C / d^p = mu d^mu_p, clamped to a sane range.
  const double exp_sum = rep_exp + att_exp;
  const double balance = exp_sum > 0.05 ? std::pow(c / mu, 1.0 / exp_sum) : 1.0;
  const double natural = std::clamp(balance, 1e-3, 1e3);
  const double scale = natural * std::sqrt(static_cast<double>(n));
  const double floor = 1e-6 * natural;

  Positions p = integrate(random_start(n, scale, seed), 0.1 * scale, StepRule::unit_step, 0.0,
                          [&](const Positions& x, Positions& f) {
                            for_each_pair(x, floor, [&](auto i, auto j, double ux, double uy, double d) {
                              const double mag = c * std::pow(d, -rep_exp);
                              f(i, 0) += mag * ux;
                              f(i, 1) += mag * uy;
                              f(j, 0) -= mag * ux;
                              f(j, 1) -= mag * uy;
                            });
                            for_each_edge(g, x, floor, [&](int u, int v, double ux, double uy, double d) {
                              const double mag = mu * std::pow(d, att_exp);
                              f(u, 0) -= mag * ux;
                              f(u, 1) -= mag * uy;
                              f(v, 0) += mag * ux;
                              f(v, 1) += mag * uy;
                            });
                          });
  return Layout{std::move(p), Provenance{Engine::exponent_force, params, seed}};
}

Layout run_engine(const Graph& g, const LayoutParams& params, std::uint64_t seed) {
  return std::visit(
      [&](const auto& p) -> Layout {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, SpringParams>) return spring_layout(g, p, seed);
        else if constexpr (std::is_same_v<T, LinLogParams>) return linlog_gravity_layout(g, p, seed);
        else return exponent_force_layout(g, p, seed);
      },
      params);
}

}  // namespace layoutgen
