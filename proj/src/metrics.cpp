#include "layoutgen/metrics.hpp"

#include "layoutgen/kernels.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace layoutgen {

namespace {

void check_positions(const Graph& g, const Positions& p) {
  if (static_cast<std::size_t>(p.rows()) != g.node_count() || p.cols() != 2) {
    throw std::invalid_argument("layout is " + std::to_string(p.rows()) + "x" + std::to_string(p.cols()) +
                                ", graph has " + std::to_string(g.node_count()) + " nodes");
  }
}

double jaccard(std::span<const int> a, std::span<const int> b) {
  // Both sorted.
  if (a.empty() && b.empty()) return 1.0;
  std::size_t common = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++common;
      ++i;
      ++j;
    }
  }
  return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

}  // namespace

std::int64_t count_crossings(const Graph& g, const Positions& p) {
  check_positions(g, p);
  return kernels::parallel::count_crossings(g.edges(), p);
}

std::int64_t max_crossings(const Graph& g) {
  const auto m = static_cast<std::int64_t>(g.edge_count());
  std::int64_t adjacent = 0;
  for (std::size_t v = 0; v < g.node_count(); ++v) {
    const auto d = static_cast<std::int64_t>(g.degree(static_cast<int>(v)));
    adjacent += d * (d - 1) / 2;
  }
  return m * (m - 1) / 2 - adjacent;
}

double crosslessness(const Graph& g, const Positions& p) {
  const std::int64_t cmax = max_crossings(g);
  if (cmax <= 0) return 1.0;
  return 1.0 - std::sqrt(static_cast<double>(count_crossings(g, p)) / static_cast<double>(cmax));
}

Graph gabriel_graph(const Positions& p) {
  const std::vector<Edge> edges = kernels::parallel::gabriel_edges(p);
  return Graph(static_cast<std::size_t>(p.rows()), edges);
}

double shape_based_metric(const Graph& g, const Positions& p) {
  check_positions(g, p);
  if (g.node_count() == 0) return 1.0;
  const Graph shape = gabriel_graph(p);
  double sum = 0.0;
  for (std::size_t v = 0; v < g.node_count(); ++v) {
    sum += jaccard(g.neighbors(static_cast<int>(v)), shape.neighbors(static_cast<int>(v)));
  }
  return sum / static_cast<double>(g.node_count());
}

LayoutMetrics measure(const Graph& g, const Positions& p) {
  LayoutMetrics m;
  m.crossings = count_crossings(g, p);
  const std::int64_t cmax = max_crossings(g);
  m.crosslessness = cmax > 0 ? 1.0 - std::sqrt(static_cast<double>(m.crossings) / static_cast<double>(cmax)) : 1.0;
  m.shape = shape_based_metric(g, p);
  return m;
}

std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::crossings:
      return "crossings";
    case Metric::crosslessness:
      return "crosslessness";
    case Metric::shape:
      return "shape";
  }
  return "?";
}

Metric metric_from_name(std::string_view name) {
  for (Metric m : {Metric::crossings, Metric::crosslessness, Metric::shape}) {
    if (metric_name(m) == name) return m;
  }
  throw std::invalid_argument("unknown metric '" + std::string(name) + "' (crossings, crosslessness, shape)");
}

double evaluate_metric(Metric m, const Graph& g, const Positions& p) {
  switch (m) {
    case Metric::crossings:
      return static_cast<double>(count_crossings(g, p));
    case Metric::crosslessness:
      return crosslessness(g, p);
    case Metric::shape:
      return shape_based_metric(g, p);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

RowVector cell_center(int row, int col, int resolution) {
  RowVector z(2);
  z << -1.0 + (2.0 * col + 1.0) / resolution, 1.0 - (2.0 * row + 1.0) / resolution;
  return z;
}

Matrix latent_grid(int resolution) {
  if (resolution < 1) throw std::invalid_argument("grid resolution must be positive");
  Matrix z(static_cast<Eigen::Index>(resolution) * resolution, 2);
  for (int r = 0; r < resolution; ++r) {
    for (int c = 0; c < resolution; ++c) z.row(static_cast<Eigen::Index>(r) * resolution + c) = cell_center(r, c, resolution);
  }
  return z;
}

std::optional<Matrix> metric_heatmap(const Graph& g, const GraphContext& ctx, const ModelParams& params, Metric metric,
                                     int resolution, HeatmapProgress* progress) {
  if (resolution < 2) throw std::invalid_argument("heatmap resolution must be at least 2");
  const Matrix z = latent_grid(resolution);
  Matrix grid(resolution, resolution);
  constexpr Eigen::Index kChunk = 64;
  for (Eigen::Index start = 0; start < z.rows(); start += kChunk) {
    if (progress && progress->cancel.load()) return std::nullopt;
    const Eigen::Index count = std::min(kChunk, z.rows() - start);
    const std::vector<Positions> layouts = decode_batch(ctx, params, z.middleRows(start, count));
#pragma omp parallel for schedule(dynamic) num_threads(thread_limit())
    for (Eigen::Index k = 0; k < count; ++k) {
      double value;
      try {
        value = evaluate_metric(metric, g, layouts[static_cast<std::size_t>(k)]);
      } catch (const DegenerateLayoutError&) {
        value = std::numeric_limits<double>::quiet_NaN();
      }
      grid((start + k) / resolution, (start + k) % resolution) = value;
    }
    if (progress) progress->done += static_cast<std::size_t>(count);
  }
  return grid;
}

void write_heatmap_csv(std::ostream& out, const Matrix& grid) {
  const auto old = out.precision(17);
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    for (Eigen::Index c = 0; c < grid.cols(); ++c) out << (c ? "," : "") << grid(r, c);
    out << '\n';
  }
  out.precision(old);
}

void write_heatmap_pgm(std::ostream& out, const Matrix& grid) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : grid.reshaped()) {
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  out << "P5\n" << grid.cols() << ' ' << grid.rows() << "\n255\n";
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    for (Eigen::Index c = 0; c < grid.cols(); ++c) {
      const double v = grid(r, c);
      unsigned char px = 0;
      if (std::isfinite(v)) px = hi > lo ? static_cast<unsigned char>(std::lround(255.0 * (v - lo) / (hi - lo))) : 128;
      out.put(static_cast<char>(px));
    }
  }
}

Correlation pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("correlation needs equal-length samples");
  if (x.size() < 3) throw std::invalid_argument("correlation needs at least 3 samples");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw UndefinedCorrelation("correlation undefined: a sample has zero variance");
  Correlation c;
  c.n = x.size();
  c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = n - 2.0;
  if (std::abs(c.r) == 1.0) {
    c.p_value = 0.0;
  } else {
    const double t = c.r * std::sqrt(df / (1.0 - c.r * c.r));
    const boost::math::students_t dist(df);
    c.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  }
  return c;
}

MetricReport metric_report(const Graph& g, std::span<const Positions> layouts, std::span<const double> losses) {
  if (!losses.empty() && losses.size() != layouts.size()) {
    throw std::invalid_argument("got " + std::to_string(losses.size()) + " losses for " +
                                std::to_string(layouts.size()) + " layouts");
  }
  MetricReport r;
  r.layouts.resize(layouts.size());
  for (std::size_t i = 0; i < layouts.size(); ++i) r.layouts[i] = measure(g, layouts[i]);
  r.losses.assign(losses.begin(), losses.end());
  if (losses.size() >= 3) {
    std::vector<double> c(layouts.size()), s(layouts.size());
    for (std::size_t i = 0; i < layouts.size(); ++i) {
      c[i] = r.layouts[i].crosslessness;
      s[i] = r.layouts[i].shape;
    }
    try {
      r.loss_vs_crosslessness = pearson(losses, c);
    } catch (const UndefinedCorrelation&) {
    }
    try {
      r.loss_vs_shape = pearson(losses, s);
    } catch (const UndefinedCorrelation&) {
    }
  }
  return r;
}

void write_metric_report_csv(std::ostream& out, const MetricReport& r) {
  const auto old = out.precision(17);
  out << "index,crossings,crosslessness,shape" << (r.losses.empty() ? "" : ",loss") << '\n';
  for (std::size_t i = 0; i < r.layouts.size(); ++i) {
    const LayoutMetrics& m = r.layouts[i];
    out << i << ',' << m.crossings << ',' << m.crosslessness << ',' << m.shape;
    if (!r.losses.empty()) out << ',' << r.losses[i];
    out << '\n';
  }
  const auto note = [&](const char* name, const std::optional<Correlation>& c) {
    if (c) out << "# pearson loss " << name << " r=" << c->r << " p=" << c->p_value << " n=" << c->n << '\n';
  };
  note("crosslessness", r.loss_vs_crosslessness);
  note("shape", r.loss_vs_shape);
  out.precision(old);
}

}  // namespace layoutgen
