// layoutgen: corpus generation, training, evaluation and serving.

#include "layoutgen/bundle.hpp"
#include "layoutgen/features.hpp"
#include "layoutgen/io.hpp"
#include "layoutgen/kernels.hpp"
#include "layoutgen/metrics.hpp"
#include "layoutgen/service.hpp"
#include "layoutgen/training.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace layoutgen;

namespace {

struct Options {
  std::uint64_t seed = 0;

  // gen
  std::string graph, out, engines = "spring,linlog,exponent";
  std::size_t count = 2000;
  bool serial = false;

  // train / xval
  std::string corpus, kind = "ginmlp", checkpoint_dir, resume, history, bundle_out;
  bool no_gw = false;
  int hidden = 0, layers = 3, slices = 50, epochs = 50, folds = 5, repeats = 1;
  double beta = 10.0, lr = 1e-3;
  std::size_t batch = 0, generate = 0;

  // metrics / heatmap / grid / serve / bundle
  std::string layouts, report, model, metric = "crosslessness", addr = "127.0.0.1:8080", id;
  int res = 0;
};

Graph read_graph(const std::string& path) {
  const Graph full = load_graph_file(path);
  Graph g = largest_component(full);
  if (g.node_count() != full.node_count()) {
    std::cerr << "note: kept the largest component, " << g.node_count() << " of " << full.node_count()
              << " nodes\n";
  }
  return g;
}

std::vector<Engine> parse_engines(const std::string& list) {
  std::vector<Engine> out;
  std::stringstream ss(list);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (name == "linlog") name = "linlog-gravity";
    if (name == "exponent") name = "exponent-force";
    out.push_back(engine_from_name(name));
  }
  if (out.empty()) throw std::invalid_argument("no engines given");
  return out;
}

ModelConfig model_config(const Options& o, const Graph& g) {
  ModelConfig mc;
  mc.kind = gnn_kind_from_name(o.kind);
  mc.use_gw = !o.no_gw;
  mc.layers = o.layers;
  mc.hidden = o.hidden > 0 ? o.hidden : default_hidden_width(g.node_count());
  mc.beta = o.beta;
  mc.slices = o.slices;
  mc.seed = o.seed;
  mc.node_count = g.node_count();
  return mc;
}

TrainConfig train_config(const Options& o, const Graph& g) {
  TrainConfig tc;
  tc.learning_rate = o.lr;
  tc.epochs = o.epochs;
  tc.batch_size = o.batch > 0 ? o.batch : default_batch_size(g.node_count());
  tc.seed = o.seed;
  tc.checkpoint_dir = o.checkpoint_dir;
  return tc;
}

bool is_bundle(const std::string& path) { return io::read_file(path).substr(0, 3) == "GLB"; }

// A bundle, or a bare model paired with --graph.
ModelBundle open_model(const Options& o) {
  if (is_bundle(o.model)) return load_bundle(o.model);
  if (o.graph.empty()) throw std::invalid_argument("--graph is required with a bare model file");
  const Graph g = read_graph(o.graph);
  return make_bundle(g, io::load_model(o.model), std::filesystem::path(o.graph).stem().string(), 0);
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    io::write_file(path, text);
  }
}

int cmd_gen(const Options& o) {
  const Graph g = read_graph(o.graph);
  const std::vector<Engine> engines = parse_engines(o.engines);
  TrainingCorpus c = collect_corpus(g, o.count, engines, o.seed, o.serial ? Execution::serial : Execution::parallel);
  c.graph_id = std::filesystem::path(o.graph).stem().string();
  io::save_corpus(c, o.out);
  std::cerr << "wrote " << c.size() << " layouts of " << g.node_count() << " nodes to " << o.out << '\n';
  return 0;
}

int cmd_train(const Options& o) {
  const Graph g = read_graph(o.graph);
  const ModelConfig mc = model_config(o, g);
  const TrainConfig tc = train_config(o, g);
  const auto hook = [&](int epoch, const ModelParams&, const TrainHistory& h) {
    const auto means = h.epoch_mean_total();
    std::cerr << "epoch " << epoch + 1 << "/" << tc.epochs << " loss " << means.back() << " ("
              << h.epoch_seconds.back() << " s)\n";
  };
  TrainResult r;
  if (o.generate > 0) {
    const std::vector<Engine> engines = parse_engines(o.engines);
    r = generate_and_train(g, o.generate, engines, derive_seed(o.seed, 0, 7), mc, tc, hook);
  } else {
    if (o.corpus.empty()) throw std::invalid_argument("train needs --corpus or --generate");
    const TrainingCorpus c = io::load_corpus(o.corpus);
    std::optional<TrainCheckpoint> ck;
    if (!o.resume.empty()) ck = load_checkpoint(o.resume);
    r = train(g, c, mc, tc, hook, ck ? &*ck : nullptr);
  }
  if (r.history.skipped_layouts > 0) std::cerr << "skipped " << r.history.skipped_layouts << " degenerate layouts\n";
  if (!o.out.empty()) io::save_model(r.params, o.out);
  if (!o.bundle_out.empty()) {
    save_bundle(make_bundle(g, r.params, std::filesystem::path(o.graph).stem().string()), o.bundle_out);
  }
  if (!o.history.empty()) {
    std::ostringstream ss;
    write_history_csv(ss, r.history);
    io::write_file(o.history, ss.str());
  }
  return 0;
}

int cmd_xval(const Options& o) {
  const Graph g = read_graph(o.graph);
  const TrainingCorpus c = io::load_corpus(o.corpus);
  std::vector<Positions> layouts;
  for (const Layout& l : c.records) layouts.push_back(l.positions);
  const CrossValidation cv =
      cross_validate(g, layouts, model_config(o, g), train_config(o, g), o.folds, o.repeats, o.seed, true);
  std::ostringstream ss;
  ss.precision(17);
  ss << "repeat,fold,train_size,test_size,train_loss,test_loss\n";
  for (const FoldResult& f : cv.folds) {
    ss << f.repeat << ',' << f.fold << ',' << f.train_size << ',' << f.test_size << ',' << f.train_loss.value_or(NAN)
       << ',' << f.test_loss << '\n';
  }
  write_text(o.out, ss.str());
  std::cerr << "mean test loss " << cv.mean_test_loss << '\n';
  return 0;
}

int cmd_metrics(const Options& o) {
  const Graph g = read_graph(o.graph);
  const TrainingCorpus c = io::load_corpus(o.layouts);
  std::vector<Positions> layouts;
  for (const Layout& l : c.records) layouts.push_back(l.positions);
  std::vector<double> losses;
  if (!o.model.empty()) {
    const ModelBundle b = open_model(o);
    losses = evaluate_reconstruction(GraphContext::from(g), b.params, structural_equivalence(g), layouts);
  }
  const MetricReport r = metric_report(g, layouts, losses);
  std::ostringstream ss;
  write_metric_report_csv(ss, r);
  write_text(o.report, ss.str());
  const auto show = [](const char* name, const std::optional<Correlation>& c) {
    if (c) std::cerr << "loss vs " << name << ": r = " << c->r << ", p = " << c->p_value << '\n';
  };
  show("crosslessness", r.loss_vs_crosslessness);
  show("shape", r.loss_vs_shape);
  return 0;
}

int cmd_heatmap(const Options& o) {
  const ModelBundle b = open_model(o);
  const Metric metric = metric_from_name(o.metric);
  const int res = o.res > 0 ? o.res : 64;
  const Matrix grid = *metric_heatmap(b.graph, GraphContext::from(b.graph), b.params, metric, res);
  const std::string prefix = o.out.empty() ? std::string(metric_name(metric)) : o.out;
  std::ostringstream csv, pgm;
  write_heatmap_csv(csv, grid);
  write_heatmap_pgm(pgm, grid);
  io::write_file(prefix + ".csv", csv.str());
  io::write_file(prefix + ".pgm", pgm.str());
  std::cerr << "wrote " << prefix << ".csv and " << prefix << ".pgm\n";
  return 0;
}

int cmd_grid(const Options& o) {
  const ModelBundle b = open_model(o);
  const int res = o.res > 0 ? o.res : 8;
  const Matrix zs = latent_grid(res);
  const std::vector<Positions> layouts =
      res == b.grid_resolution ? b.grid : decode_batch(GraphContext::from(b.graph), b.params, zs);
  nlohmann::json cells = nlohmann::json::array();
  for (Eigen::Index k = 0; k < zs.rows(); ++k) {
    nlohmann::json pos = nlohmann::json::array();
    const Positions& p = layouts[static_cast<std::size_t>(k)];
    for (Eigen::Index i = 0; i < p.rows(); ++i) pos.push_back({p(i, 0), p(i, 1)});
    cells.push_back({{"row", k / res}, {"col", k % res}, {"z", {zs(k, 0), zs(k, 1)}}, {"positions", std::move(pos)}});
  }
  write_text(o.out, nlohmann::json{{"res", res}, {"cells", std::move(cells)}}.dump() + "\n");
  return 0;
}

Service* running_service = nullptr;

int cmd_serve(const Options& o) {
  const auto colon = o.addr.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("--addr must be host:port");
  const std::string host = o.addr.substr(0, colon);
  const int port = std::stoi(o.addr.substr(colon + 1));
  Service service(open_model(o));
  const int bound = service.bind(host, port);
  running_service = &service;
  std::signal(SIGINT, [](int) {
    if (running_service) running_service->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (running_service) running_service->stop();
  });
  std::cerr << "serving " << service.bundle().graph_id << " on http://" << host << ':' << bound << '\n';
  service.listen();
  running_service = nullptr;
  return 0;
}

int cmd_bundle(const Options& o) {
  const Graph g = read_graph(o.graph);
  const std::string id = o.id.empty() ? std::filesystem::path(o.graph).stem().string() : o.id;
  save_bundle(make_bundle(g, io::load_model(o.model), id, o.res > 0 ? o.res : 8), o.out);
  std::cerr << "wrote " << o.out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  configure_threads();
  Options o;
  CLI::App app{"Learn and explore a generative model of graph layouts"};
  app.require_subcommand(1);
  const auto seed = [&](CLI::App* sub) { sub->add_option("--seed", o.seed, "Random seed")->capture_default_str(); };
  const auto model_flags = [&](CLI::App* sub) {
    sub->add_option("--kind", o.kind, "GNN layer: mlp, gcn, gin1, ginmlp")->capture_default_str();
    sub->add_flag("--no-gw", o.no_gw, "Match layouts without the transport alignment");
    sub->add_option("--hidden", o.hidden, "Hidden width (32, 64 or 128; default by graph size)");
    sub->add_option("--layers", o.layers, "GNN layers")->capture_default_str();
    sub->add_option("--beta", o.beta, "Weight of the latent regularizer")->capture_default_str();
    sub->add_option("--slices", o.slices, "Projection directions of the latent regularizer")->capture_default_str();
    sub->add_option("--epochs", o.epochs, "Training epochs")->capture_default_str();
    sub->add_option("--batch", o.batch, "Batch size (default by graph size)");
    sub->add_option("--lr", o.lr, "Adam learning rate")->capture_default_str();
  };

  CLI::App* gen = app.add_subcommand("gen", "Generate a layout corpus");
  gen->add_option("--graph", o.graph, "Graph file (.txt edge list, .mtx, .json)")->required();
  gen->add_option("--count", o.count, "Number of layouts")->capture_default_str();
  gen->add_option("--engines", o.engines, "Comma-separated engines")->capture_default_str();
  gen->add_option("--out", o.out, "Output corpus (.jsonl or binary)")->required();
  gen->add_flag("--serial", o.serial, "Generate on one thread");
  seed(gen);

  CLI::App* tr = app.add_subcommand("train", "Train a model on a corpus");
  tr->add_option("--graph", o.graph, "Graph file")->required();
  tr->add_option("--corpus", o.corpus, "Training corpus");
  tr->add_option("--generate", o.generate, "Generate this many layouts and train while they arrive");
  tr->add_option("--engines", o.engines, "Engines for --generate")->capture_default_str();
  tr->add_option("--out", o.out, "Output model (GLM1)");
  tr->add_option("--bundle", o.bundle_out, "Also write a service bundle (GLB1)");
  tr->add_option("--history", o.history, "Per-batch loss CSV");
  tr->add_option("--checkpoint-dir", o.checkpoint_dir, "Write a checkpoint after every epoch");
  tr->add_option("--resume", o.resume, "Continue from a checkpoint");
  model_flags(tr);
  seed(tr);

  CLI::App* xv = app.add_subcommand("xval", "k-fold cross-validation");
  xv->add_option("--graph", o.graph, "Graph file")->required();
  xv->add_option("--corpus", o.corpus, "Corpus")->required();
  xv->add_option("--folds", o.folds, "k")->capture_default_str();
  xv->add_option("--repeats", o.repeats, "Repetitions with fresh folds")->capture_default_str();
  xv->add_option("--out", o.out, "Per-fold CSV (stdout by default)");
  model_flags(xv);
  seed(xv);

  CLI::App* me = app.add_subcommand("metrics", "Layout quality metrics and loss correlations");
  me->add_option("--graph", o.graph, "Graph file")->required();
  me->add_option("--layouts", o.layouts, "Corpus of layouts")->required();
  me->add_option("--model", o.model, "Model or bundle; adds per-layout loss and correlations");
  me->add_option("--report", o.report, "Report CSV (stdout by default)");
  seed(me);

  CLI::App* hm = app.add_subcommand("heatmap", "Metric heatmap over the latent space");
  hm->add_option("--model", o.model, "Bundle, or model with --graph")->required();
  hm->add_option("--graph", o.graph, "Graph file for a bare model");
  hm->add_option("--metric", o.metric, "crossings, crosslessness or shape")->capture_default_str();
  hm->add_option("--res", o.res, "Grid resolution (default 64)");
  hm->add_option("--out", o.out, "Output prefix for .csv and .pgm");
  seed(hm);

  CLI::App* gr = app.add_subcommand("grid", "Decode a grid of latent codes");
  gr->add_option("--model", o.model, "Bundle, or model with --graph")->required();
  gr->add_option("--graph", o.graph, "Graph file for a bare model");
  gr->add_option("--res", o.res, "Grid resolution (default 8)");
  gr->add_option("--out", o.out, "Output JSON (stdout by default)");
  seed(gr);

  CLI::App* sv = app.add_subcommand("serve", "Run the HTTP inference service");
  sv->add_option("--model", o.model, "Bundle, or model with --graph")->required();
  sv->add_option("--graph", o.graph, "Graph file for a bare model");
  sv->add_option("--addr", o.addr, "host:port")->capture_default_str();
  seed(sv);

  CLI::App* bu = app.add_subcommand("bundle", "Package a graph and model for serving");
  bu->add_option("--graph", o.graph, "Graph file")->required();
  bu->add_option("--model", o.model, "Model (GLM1)")->required();
  bu->add_option("--out", o.out, "Output bundle (GLB1)")->required();
  bu->add_option("--id", o.id, "Graph id (default: file stem)");
  bu->add_option("--res", o.res, "Precomputed grid resolution (default 8)");
  seed(bu);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return 2;
  }

  try {
    if (*gen) return cmd_gen(o);
    if (*tr) return cmd_train(o);
    if (*xv) return cmd_xval(o);
    if (*me) return cmd_metrics(o);
    if (*hm) return cmd_heatmap(o);
    if (*gr) return cmd_grid(o);
    if (*sv) return cmd_serve(o);
    if (*bu) return cmd_bundle(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
