#pragma once

#include "layoutgen/graph.hpp"
#include "layoutgen/model.hpp"

#include <atomic>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>

namespace layoutgen {

// Unordered edge pairs whose open segments properly intersect. Pairs that
// share an endpoint never count.
std::int64_t count_crossings(const Graph& g, const Positions& p);

// m(m-1)/2 minus the pairs sharing an endpoint.
std::int64_t max_crossings(const Graph& g);

// 1 - sqrt(c / c_max), or 1 when no crossing is possible.
double crosslessness(const Graph& g, const Positions& p);

/// Gabriel graph of the points: u-v is an edge iff no third point lies
/// strictly inside the disk with diameter uv. Points on the boundary keep
/// the edge. Throws DegenerateLayoutError listing coincident points.
Graph gabriel_graph(const Positions& p);

// Mean over nodes of the Jaccard similarity between the neighbourhoods in g
// and in the Gabriel graph. A node isolated in both scores 1.
double shape_based_metric(const Graph& g, const Positions& p);

struct LayoutMetrics {
  std::int64_t crossings = 0;
  double crosslessness = 1.0;
  double shape = 0.0;
};

LayoutMetrics measure(const Graph& g, const Positions& p);

enum class Metric { crossings, crosslessness, shape };

std::string_view metric_name(Metric m);  // "crossings", "crosslessness", "shape"
Metric metric_from_name(std::string_view name);
double evaluate_metric(Metric m, const Graph& g, const Positions& p);

// Centre of cell (row, col) of a res x res grid over [-1, 1]^2. Row 0 is the
// top (y near +1), columns run left to right.
RowVector cell_center(int row, int col, int resolution);
// All cell centres in row-major order, res^2 x 2.
Matrix latent_grid(int resolution);

struct HeatmapProgress {
  std::atomic<std::size_t> done{0};
  std::atomic<bool> cancel{false};
};

/// Metric value of the decoded layout at every cell centre, row-major.
/// Cells whose layout cannot be measured (coincident points for the shape
/// metric) hold NaN. Returns nullopt when cancelled through `progress`.
std::optional<Matrix> metric_heatmap(const Graph& g, const GraphContext& ctx, const ModelParams& params, Metric metric,
                                     int resolution, HeatmapProgress* progress = nullptr);

void write_heatmap_csv(std::ostream& out, const Matrix& grid);
// 8-bit binary PGM, values scaled from [min, max] of the finite cells to
// [0, 255]; NaN cells are black.
void write_heatmap_pgm(std::ostream& out, const Matrix& grid);

class UndefinedCorrelation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct Correlation {
  double r = 0.0;
  double p_value = 1.0;  // two-sided, Student t with n - 2 degrees of freedom
  std::size_t n = 0;
};

// Pearson correlation. Needs equal lengths of at least 3; throws
// UndefinedCorrelation when either side has zero variance.
Correlation pearson(std::span<const double> x, std::span<const double> y);

struct MetricReport {
  std::vector<LayoutMetrics> layouts;
  std::vector<double> losses;  // empty unless given
  std::optional<Correlation> loss_vs_crosslessness;
  std::optional<Correlation> loss_vs_shape;
};

// Metrics of every layout. With losses of the same length the loss-metric
// correlations are filled in when defined.
MetricReport metric_report(const Graph& g, std::span<const Positions> layouts, std::span<const double> losses = {});

// One row per layout: index,crossings,crosslessness,shape[,loss]. Correlations
// follow as comment lines.
void write_metric_report_csv(std::ostream& out, const MetricReport& r);

}  // namespace layoutgen
