#include "layoutgen/service.hpp"

#include "layoutgen/features.hpp"
#include "layoutgen/kernels.hpp"

#include "httplib.h"
#include "json.hpp"

#include <cmath>
#include <condition_variable>
#include <map>
#include <mutex>
#include <thread>

namespace layoutgen {

using nlohmann::json;

namespace {

constexpr int kMaxGridResolution = 64;
constexpr int kMaxHeatmapResolution = 540;

// Rejection carrying a status and a JSON body.
struct HttpError {
  int status;
  json body;
};

[[noreturn]] void bad_request(const std::string& message) { throw HttpError{400, {{"error", message}}}; }

json positions_json(const Positions& p) {
  json out = json::array();
  for (Eigen::Index i = 0; i < p.rows(); ++i) out.push_back({p(i, 0), p(i, 1)});
  return out;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json layout_json(const Positions& p) {
  return {{"positions", positions_json(normalize_positions(p))}, {"raw", positions_json(p)}};
}

RowVector checked_z(double x, double y) {
  if (!std::isfinite(x) || !std::isfinite(y)) bad_request("z must be two finite numbers");
  RowVector z(2);
  z << x, y;
  if (std::abs(x) > 1.0 || std::abs(y) > 1.0) {
    throw HttpError{400,
                    {{"error", "z must lie in [-1, 1]^2"},
                     {"suggestion", {{"z", {std::clamp(x, -1.0, 1.0), std::clamp(y, -1.0, 1.0)}}}}}};
  }
  return z;
}

RowVector z_from_body(const std::string& body) {
  const json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("z")) bad_request("body must be a JSON object with \"z\"");
  const json& z = j["z"];
  if (!z.is_array() || z.size() != 2 || !z[0].is_number() || !z[1].is_number()) {
    bad_request("\"z\" must be an array of two numbers");
  }
  return checked_z(z[0].get<double>(), z[1].get<double>());
}

RowVector z_from_query(const httplib::Request& req) {
  if (!req.has_param("z")) bad_request("missing query parameter z=x,y");
  const std::string s = req.get_param_value("z");
  const auto comma = s.find(',');
  if (comma == std::string::npos) bad_request("z must be given as x,y");
  try {
    std::size_t used_x = 0, used_y = 0;
    const std::string xs = s.substr(0, comma), ys = s.substr(comma + 1);
    const double x = std::stod(xs, &used_x), y = std::stod(ys, &used_y);
    if (used_x != xs.size() || used_y != ys.size()) bad_request("z must be given as x,y");
    return checked_z(x, y);
  } catch (const std::logic_error&) {
    bad_request("z must be given as x,y");
  }
}

int int_param(const httplib::Request& req, const char* name, int fallback, int lo, int hi) {
  if (!req.has_param(name)) return fallback;
  const std::string s = req.get_param_value(name);
  int v = 0;
  try {
    std::size_t used = 0;
    v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
  } catch (const std::logic_error&) {
    bad_request(std::string(name) + " must be an integer");
  }
  if (v < lo || v > hi) {
    throw HttpError{400,
                    {{"error", std::string(name) + " must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]"},
                     {"suggestion", {{name, std::clamp(v, lo, hi)}}}}};
  }
  return v;
}

json heatmap_json(Metric metric, int res, const Matrix& grid) {
  json values = json::array();
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < grid.cols(); ++c) {
      const double v = grid(r, c);
      row.push_back(number_or_null(v));
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    values.push_back(std::move(row));
  }
  return {{"metric", metric_name(metric)},
          {"res", res},
          {"values", std::move(values)},
          {"min", number_or_null(lo)},
          {"max", number_or_null(hi)}};
}

enum class JobState { running, done, cancelled, failed };

const char* state_name(JobState s) {
  switch (s) {
    case JobState::running:
      return "running";
    case JobState::done:
      return "done";
    case JobState::cancelled:
      return "cancelled";
    case JobState::failed:
      return "failed";
  }
  return "?";
}

struct HeatmapJob {
  std::string id;
  Metric metric;
  int res;
  HeatmapProgress progress;
  std::mutex mutex;
  JobState state = JobState::running;
  Matrix result;
  std::string error;
  std::thread worker;
};

}  // namespace

Positions normalize_positions(const Positions& p) {
  Positions out(p.rows(), 2);
  if (p.rows() == 0) return out;
  const Eigen::RowVector2d lo = p.colwise().minCoeff(), hi = p.colwise().maxCoeff();
  const Eigen::RowVector2d extent = hi - lo;
  const double scale = extent.maxCoeff();
  if (!(scale > 0.0) || !std::isfinite(scale)) return Positions::Constant(p.rows(), 2, 0.5);
  const Eigen::RowVector2d offset = (Eigen::RowVector2d::Ones() - extent / scale) / 2.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) out.row(i) = (p.row(i) - lo) / scale + offset;
  return out;
}

struct Service::Impl {
  ModelBundle bundle;
  GraphContext ctx;
  json graph_body;
  httplib::Server server;
  std::thread thread;

  std::mutex jobs_mutex;
  std::map<std::string, std::shared_ptr<HeatmapJob>> jobs;
  std::map<std::pair<Metric, int>, std::shared_ptr<HeatmapJob>> job_by_key;
  std::uint64_t next_job = 1;

  explicit Impl(ModelBundle b) : bundle(std::move(b)), ctx(GraphContext::from(bundle.graph)) {
    json edges = json::array();
    for (const auto& [u, v] : bundle.graph.edges()) edges.push_back({u, v});
    // Classes of two or more nodes, largest first; singletons get -1.
    std::vector<const std::vector<int>*> classes;
    for (const auto& c : bundle.partition.classes) {
      if (c.size() >= 2) classes.push_back(&c);
    }
    std::stable_sort(classes.begin(), classes.end(), [](auto a, auto b) { return a->size() > b->size(); });
    std::vector<int> sen_class(bundle.graph.node_count(), -1);
    json class_list = json::array();
    for (std::size_t k = 0; k < classes.size(); ++k) {
      for (int v : *classes[k]) sen_class[static_cast<std::size_t>(v)] = static_cast<int>(k);
      class_list.push_back(*classes[k]);
    }
    graph_body = {{"id", bundle.graph_id},
                  {"node_count", bundle.graph.node_count()},
                  {"edges", std::move(edges)},
                  {"labels", bundle.graph.labels()},
                  {"sen_class", sen_class},
                  {"sen_classes", std::move(class_list)},
                  {"model", config_to_json(bundle.params.config)}};
    routes();
  }

  ~Impl() {
    stop();
    std::lock_guard lock(jobs_mutex);
    for (auto& [id, job] : jobs) job->progress.cancel = true;
    for (auto& [id, job] : jobs) {
      if (job->worker.joinable()) job->worker.join();
    }
  }

  void stop() {
    server.stop();
    if (thread.joinable()) thread.join();
  }

  template <class F>
  httplib::Server::Handler handler(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        const json body = f(req, res);
        res.set_content(body.dump(), "application/json");
      } catch (const HttpError& e) {
        res.status = e.status;
        res.set_content(e.body.dump(), "application/json");
      }
    };
  }

  Positions decode_at(const RowVector& z) const { return decode(ctx, bundle.params, z); }

  json job_json(HeatmapJob& job) {
    std::lock_guard lock(job.mutex);
    json j = {{"job", job.id},
              {"metric", metric_name(job.metric)},
              {"res", job.res},
              {"status", state_name(job.state)},
              {"done", job.progress.done.load()},
              {"total", job.res * job.res}};
    if (job.state == JobState::failed) j["error"] = job.error;
    return j;
  }

  std::shared_ptr<HeatmapJob> start_job(Metric metric, int res) {
    auto job = std::make_shared<HeatmapJob>();
    job->id = std::to_string(next_job++);
    job->metric = metric;
    job->res = res;
    jobs[job->id] = job;
    job_by_key[{metric, res}] = job;
    HeatmapJob* raw = job.get();
    job->worker = std::thread([this, raw] {
      try {
        std::optional<Matrix> grid = metric_heatmap(bundle.graph, ctx, bundle.params, raw->metric, raw->res, &raw->progress);
        std::lock_guard lock(raw->mutex);
        if (grid) {
          raw->result = std::move(*grid);
          raw->state = JobState::done;
        } else {
          raw->state = JobState::cancelled;
        }
      } catch (const std::exception& e) {
        std::lock_guard lock(raw->mutex);
        raw->state = JobState::failed;
        raw->error = e.what();
      }
    });
    return job;
  }

  void routes() {
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string what = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      res.status = 500;
      res.set_content(json{{"error", what}}.dump(), "application/json");
    });

    server.Get("/graph", handler([this](const httplib::Request&, httplib::Response&) { return graph_body; }));

    server.Post("/decode", handler([this](const httplib::Request& req, httplib::Response&) {
                  const RowVector z = z_from_body(req.body);
                  json out = layout_json(decode_at(z));
                  out["z"] = {z(0), z(1)};
                  return out;
                }));

    server.Get("/grid", handler([this](const httplib::Request& req, httplib::Response&) {
                 const int res = int_param(req, "res", 8, 1, kMaxGridResolution);
                 const Matrix zs = latent_grid(res);
                 const std::vector<Positions> layouts =
                     res == bundle.grid_resolution ? bundle.grid : decode_batch(ctx, bundle.params, zs);
                 json cells = json::array();
                 for (int r = 0; r < res; ++r) {
                   for (int c = 0; c < res; ++c) {
                     const Eigen::Index k = static_cast<Eigen::Index>(r) * res + c;
                     json cell = layout_json(layouts[static_cast<std::size_t>(k)]);
                     cell["row"] = r;
                     cell["col"] = c;
                     cell["z"] = {zs(k, 0), zs(k, 1)};
                     cells.push_back(std::move(cell));
                   }
                 }
                 return json{{"res", res}, {"cells", std::move(cells)}};
               }));

    server.Get("/heatmap", handler([this](const httplib::Request& req, httplib::Response& res) {
                 Metric metric = Metric::crosslessness;
                 if (req.has_param("metric")) {
                   try {
                     metric = metric_from_name(req.get_param_value("metric"));
                   } catch (const std::invalid_argument& e) {
                     bad_request(e.what());
                   }
                 }
                 const int r = int_param(req, "res", 64, 2, kMaxHeatmapResolution);
                 if (auto it = bundle.heatmaps.find({metric, r}); it != bundle.heatmaps.end()) {
                   return heatmap_json(metric, r, it->second);
                 }
                 std::lock_guard lock(jobs_mutex);
                 auto it = job_by_key.find({metric, r});
                 std::shared_ptr<HeatmapJob> job;
                 if (it != job_by_key.end()) {
                   job = it->second;
                   std::lock_guard job_lock(job->mutex);
                   if (job->state == JobState::done) return heatmap_json(metric, r, job->result);
                   if (job->state != JobState::running) job.reset();  // cancelled or failed: start over
                 }
                 if (!job) job = start_job(metric, r);
                 res.status = 202;
                 json body = job_json(*job);
                 body["poll"] = "/jobs/" + job->id;
                 return body;
               }));

    server.Get(R"(/jobs/(\w+))", handler([this](const httplib::Request& req, httplib::Response&) {
                 std::shared_ptr<HeatmapJob> job;
                 {
                   std::lock_guard lock(jobs_mutex);
                   auto it = jobs.find(req.matches[1].str());
                   if (it == jobs.end()) throw HttpError{404, {{"error", "no such job"}}};
                   job = it->second;
                 }
                 return job_json(*job);
               }));

    server.Delete(R"(/jobs/(\w+))", handler([this](const httplib::Request& req, httplib::Response&) {
                    std::shared_ptr<HeatmapJob> job;
                    {
                      std::lock_guard lock(jobs_mutex);
                      auto it = jobs.find(req.matches[1].str());
                      if (it == jobs.end()) throw HttpError{404, {{"error", "no such job"}}};
                      job = it->second;
                    }
                    job->progress.cancel = true;
                    if (job->worker.joinable() && job->worker.get_id() != std::this_thread::get_id()) {
                      std::lock_guard lock(jobs_mutex);
                      if (job->worker.joinable()) job->worker.join();
                    }
                    return job_json(*job);
                  }));

    server.Post("/encode", handler([this](const httplib::Request& req, httplib::Response&) {
                  const json j = json::parse(req.body, nullptr, false);
                  if (j.is_discarded() || !j.is_object() || !j.contains("positions") || !j["positions"].is_array()) {
                    bad_request("body must be a JSON object with \"positions\"");
                  }
                  const json& pos = j["positions"];
                  const std::size_t n = bundle.graph.node_count();
                  if (pos.size() != n) {
                    bad_request("expected " + std::to_string(n) + " positions, got " + std::to_string(pos.size()));
                  }
                  Positions p(static_cast<Eigen::Index>(n), 2);
                  for (std::size_t i = 0; i < n; ++i) {
                    const json& xy = pos[i];
                    if (!xy.is_array() || xy.size() != 2 || !xy[0].is_number() || !xy[1].is_number()) {
                      bad_request("position " + std::to_string(i) + " must be [x, y]");
                    }
                    p(static_cast<Eigen::Index>(i), 0) = xy[0].get<double>();
                    p(static_cast<Eigen::Index>(i), 1) = xy[1].get<double>();
                  }
                  if (!p.allFinite()) bad_request("positions must be finite");
                  Matrix feature;
                  try {
                    feature = layout_feature(p);
                  } catch (const DegenerateLayoutError& e) {
                    bad_request(e.what());
                  }
                  const RowVector z = encode(ctx, bundle.params, feature);
                  return json{{"z", {z(0), z(1)}}};
                }));

    server.Get("/metrics", handler([this](const httplib::Request& req, httplib::Response&) {
                 const RowVector z = z_from_query(req);
                 const Positions p = decode_at(z);
                 json out = {{"z", {z(0), z(1)}},
                             {"crossings", count_crossings(bundle.graph, p)},
                             {"crosslessness", crosslessness(bundle.graph, p)}};
                 try {
                   out["shape"] = shape_based_metric(bundle.graph, p);
                 } catch (const DegenerateLayoutError&) {
                   out["shape"] = nullptr;
                 }
                 return out;
               }));
  }
};

Service::Service(ModelBundle bundle) : impl_(std::make_unique<Impl>(std::move(bundle))) {
  const int workers = std::max(2, thread_limit());
  impl_->server.new_task_queue = [workers] { return new httplib::ThreadPool(static_cast<std::size_t>(workers)); };
}

Service::~Service() = default;

int Service::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw std::runtime_error("cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void Service::listen() { impl_->server.listen_after_bind(); }

int Service::start(const std::string& host, int port) {
  const int bound = bind(host, port);
  impl_->thread = std::thread([this] { listen(); });
  impl_->server.wait_until_ready();
  return bound;
}

void Service::stop() { impl_->stop(); }

const ModelBundle& Service::bundle() const { return impl_->bundle; }

}  // namespace layoutgen
