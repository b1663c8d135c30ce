#include "fixtures.hpp"

#include "layoutgen/bundle.hpp"
#include "layoutgen/features.hpp"
#include "layoutgen/io.hpp"
#include "layoutgen/service.hpp"

#include "httplib.h"
#include "json.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <future>
#include <thread>

using namespace layoutgen;
using nlohmann::json;

namespace {

const ModelBundle& shared_bundle() {
  static const ModelBundle b = [] {
    const Graph g = fixtures::hub_and_leaves(20, 12, 4);
    ModelConfig mc;
    mc.node_count = g.node_count();
    mc.seed = 11;
    return make_bundle(g, ModelParams::initialize(mc), "hub32");
  }();
  return b;
}

class ServiceTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    service_ = new Service(shared_bundle());
    port_ = service_->start("127.0.0.1", 0);
  }
  static void TearDownTestSuite() {
    delete service_;
    service_ = nullptr;
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(60, 0);
    return c;
  }

  static json body_of(const httplib::Result& r) { return json::parse(r->body); }

  static Service* service_;
  static int port_;
};

Service* ServiceTest::service_ = nullptr;
int ServiceTest::port_ = 0;

}  // namespace

TEST(Bundle, RoundTripIsBitwise) {
  ModelBundle b = shared_bundle();
  b.heatmaps[{Metric::shape, 2}] = Matrix::Constant(2, 2, 0.25);
  const std::string bytes = encode_bundle(b);
  const ModelBundle back = decode_bundle(bytes);
  EXPECT_EQ(encode_bundle(back), bytes);
  EXPECT_EQ(back.graph, b.graph);
  EXPECT_EQ(back.graph_id, "hub32");
  EXPECT_EQ(back.partition.class_of, b.partition.class_of);
  const auto pa = std::as_const(b.params).arrays(), pb = back.params.arrays();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value) << pa[i]->name;
  ASSERT_EQ(back.grid.size(), 64u);
  for (std::size_t i = 0; i < b.grid.size(); ++i) EXPECT_EQ(back.grid[i], b.grid[i]);
  EXPECT_EQ(back.heatmaps.at({Metric::shape, 2}), Matrix::Constant(2, 2, 0.25));
}

TEST(Bundle, DecodeIdenticalAfterFileRoundTrip) {
  const ModelBundle& b = shared_bundle();
  const auto path = std::filesystem::temp_directory_path() / "layoutgen-test.glb";
  save_bundle(b, path);
  const ModelBundle back = load_bundle(path);
  std::filesystem::remove(path);
  const GraphContext ctx = GraphContext::from(b.graph);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    RowVector z(2);
    z << u(rng), u(rng);
    EXPECT_EQ(decode(ctx, b.params, z), decode(ctx, back.params, z));
  }
}

TEST(Bundle, GridIsDecodeReproducible) {
  const ModelBundle& b = shared_bundle();
  const GraphContext ctx = GraphContext::from(b.graph);
  EXPECT_EQ(b.grid[9], decode(ctx, b.params, cell_center(1, 1, 8)));
}

TEST(Bundle, TruncationIsAChecksumError) {
  const std::string bytes = encode_bundle(shared_bundle());
  for (std::size_t cut : {std::size_t{3}, std::size_t{9}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(decode_bundle(std::string_view(bytes).substr(0, cut)), BundleChecksumError) << cut;
  }
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  EXPECT_THROW(decode_bundle(flipped), BundleChecksumError);
}

TEST(Bundle, VersionAndMagicChecked) {
  std::string bytes = encode_bundle(shared_bundle());
  bytes[3] = '2';
  EXPECT_THROW(decode_bundle(bytes), BundleVersionError);
  bytes[0] = 'X';
  try {
    decode_bundle(bytes);
    FAIL();
  } catch (const BundleVersionError&) {
    FAIL() << "bad magic reported as a version";
  } catch (const FormatError&) {
  }
}

TEST(Bundle, RejectsMismatchedModel) {
  ModelConfig mc;
  mc.node_count = 5;
  EXPECT_THROW(make_bundle(shared_bundle().graph, ModelParams::initialize(mc), "x"), std::invalid_argument);
}

TEST(Normalize, FitsUnitSquareKeepingAspect) {
  Positions p(3, 2);
  p << -2, 1, 2, 1, 0, 3;
  const Positions q = normalize_positions(p);
  EXPECT_DOUBLE_EQ(q(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(q(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(q(0, 1), 0.25);
  EXPECT_DOUBLE_EQ(q(2, 1), 0.75);
  EXPECT_EQ(normalize_positions(Positions::Ones(3, 2)), Positions::Constant(3, 2, 0.5));
}

TEST_F(ServiceTest, GraphListsClasses) {
  auto c = client();
  const auto r = c.Get("/graph");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  const json j = body_of(r);
  const ModelBundle& b = shared_bundle();
  EXPECT_EQ(j["node_count"], b.graph.node_count());
  EXPECT_EQ(j["edges"].size(), b.graph.edge_count());
  EXPECT_EQ(j["sen_class"].size(), b.graph.node_count());
  std::size_t members = 0;
  for (const auto& cls : j["sen_classes"]) {
    members += cls.size();
    for (int v : cls) EXPECT_EQ(b.partition.class_of[static_cast<std::size_t>(v)], b.partition.class_of[cls[0].get<std::size_t>()]);
  }
  EXPECT_EQ(members, b.partition.nontrivial_count);
}

TEST_F(ServiceTest, DecodeIsDeterministicAndMatchesModel) {
  auto c = client();
  const std::string req = R"({"z":[0.25,-0.5]})";
  const auto a = c.Post("/decode", req, "application/json");
  const auto b = c.Post("/decode", req, "application/json");
  ASSERT_TRUE(a && b);
  EXPECT_EQ(a->status, 200);
  EXPECT_EQ(a->body, b->body);
  const json j = body_of(a);
  RowVector z(2);
  z << 0.25, -0.5;
  const Positions expected = decode(GraphContext::from(shared_bundle().graph), shared_bundle().params, z);
  ASSERT_EQ(j["raw"].size(), static_cast<std::size_t>(expected.rows()));
  for (Eigen::Index i = 0; i < expected.rows(); ++i) {
    EXPECT_EQ(j["raw"][static_cast<std::size_t>(i)][0].get<double>(), expected(i, 0));
    EXPECT_EQ(j["raw"][static_cast<std::size_t>(i)][1].get<double>(), expected(i, 1));
  }
  for (const auto& xy : j["positions"]) {
    EXPECT_GE(xy[0].get<double>(), 0.0);
    EXPECT_LE(xy[1].get<double>(), 1.0);
  }
}

TEST_F(ServiceTest, DecodeLatencyUnderBudget) {
  auto c = client();
  c.Post("/decode", R"({"z":[0,0]})", "application/json");
  const auto t0 = std::chrono::steady_clock::now();
  constexpr int kRequests = 20;
  for (int i = 0; i < kRequests; ++i) {
    ASSERT_TRUE(c.Post("/decode", R"({"z":[0.1,0.2]})", "application/json"));
  }
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(ms / kRequests, 50.0);
}

TEST_F(ServiceTest, DecodeRejectsOutOfRangeWithSuggestion) {
  auto c = client();
  const auto r = c.Post("/decode", R"({"z":[1.5,-3]})", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 400);
  const json j = body_of(r);
  EXPECT_EQ(j["suggestion"]["z"], json({1.0, -1.0}));
  for (const char* bad : {"not json", R"({"z":[1]})", R"({"z":"a"})", R"([0,0])"}) {
    const auto e = c.Post("/decode", bad, "application/json");
    ASSERT_TRUE(e);
    EXPECT_EQ(e->status, 400) << bad;
  }
}

TEST_F(ServiceTest, ConcurrentDecodesMatchSerial) {
  auto c = client();
  std::vector<std::string> serial;
  for (int k = 0; k < 8; ++k) {
    const std::string req = "{\"z\":[" + std::to_string(-0.8 + 0.2 * k) + ",0.3]}";
    serial.push_back(c.Post("/decode", req, "application/json")->body);
  }
  std::vector<std::future<std::string>> futures;
  for (int k = 0; k < 8; ++k) {
    futures.push_back(std::async(std::launch::async, [this, k] {
      auto local = client();
      const std::string req = "{\"z\":[" + std::to_string(-0.8 + 0.2 * k) + ",0.3]}";
      return local.Post("/decode", req, "application/json")->body;
    }));
  }
  for (int k = 0; k < 8; ++k) EXPECT_EQ(futures[static_cast<std::size_t>(k)].get(), serial[static_cast<std::size_t>(k)]);
}

TEST_F(ServiceTest, GridReturnsResSquaredLayouts) {
  auto c = client();
  const auto r = c.Get("/grid?res=8");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  const json j = body_of(r);
  ASSERT_EQ(j["cells"].size(), 64u);
  EXPECT_EQ(j["cells"][9]["z"], json({cell_center(1, 1, 8)(0), cell_center(1, 1, 8)(1)}));
  const auto three = c.Get("/grid?res=3");
  EXPECT_EQ(body_of(three)["cells"].size(), 9u);
  const auto bad = c.Get("/grid?res=1000");
  EXPECT_EQ(bad->status, 400);
  EXPECT_EQ(body_of(bad)["suggestion"]["res"], 64);
  EXPECT_EQ(c.Get("/grid?res=x")->status, 400);
}

TEST_F(ServiceTest, HeatmapJobCompletes) {
  auto c = client();
  const auto first = c.Get("/heatmap?metric=crosslessness&res=4");
  ASSERT_TRUE(first);
  ASSERT_EQ(first->status, 202);
  const std::string job = body_of(first)["job"];
  json status;
  for (int i = 0; i < 600; ++i) {
    status = body_of(c.Get("/jobs/" + job));
    if (status["status"] != "running") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  EXPECT_EQ(status["status"], "done");
  EXPECT_EQ(status["done"], 16);
  const auto done = c.Get("/heatmap?metric=crosslessness&res=4");
  ASSERT_EQ(done->status, 200);
  const json j = body_of(done);
  ASSERT_EQ(j["values"].size(), 4u);
  const ModelBundle& b = shared_bundle();
  const auto expected = metric_heatmap(b.graph, GraphContext::from(b.graph), b.params, Metric::crosslessness, 4);
  for (int r = 0; r < 4; ++r)
    for (int col = 0; col < 4; ++col) EXPECT_EQ(j["values"][r][col].get<double>(), (*expected)(r, col));
}

TEST_F(ServiceTest, HeatmapJobCancel) {
  auto c = client();
  const auto first = c.Get("/heatmap?metric=shape&res=300");
  ASSERT_EQ(first->status, 202);
  const std::string job = body_of(first)["job"];
  const auto del = c.Delete("/jobs/" + job);
  ASSERT_TRUE(del);
  EXPECT_EQ(del->status, 200);
  const json j = body_of(del);
  EXPECT_TRUE(j["status"] == "cancelled" || j["status"] == "done");
  EXPECT_EQ(c.Get("/jobs/nope")->status, 404);
  EXPECT_EQ(c.Get("/heatmap?metric=angles")->status, 400);
}

TEST_F(ServiceTest, EncodeRoundTripsThroughModel) {
  auto c = client();
  const ModelBundle& b = shared_bundle();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Positions p(static_cast<Eigen::Index>(b.graph.node_count()), 2);
  for (double& v : p.reshaped()) v = u(rng);
  json pos = json::array();
  for (Eigen::Index i = 0; i < p.rows(); ++i) pos.push_back({p(i, 0), p(i, 1)});
  const auto r = c.Post("/encode", json{{"positions", pos}}.dump(), "application/json");
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200);
  const RowVector z = encode(GraphContext::from(b.graph), b.params, layout_feature(p));
  EXPECT_EQ(body_of(r)["z"], json({z(0), z(1)}));
  EXPECT_EQ(c.Post("/encode", R"({"positions":[[0,0]]})", "application/json")->status, 400);
  json same = json::array();
  for (Eigen::Index i = 0; i < p.rows(); ++i) same.push_back({1.0, 1.0});
  EXPECT_EQ(c.Post("/encode", json{{"positions", same}}.dump(), "application/json")->status, 400);
}

TEST_F(ServiceTest, MetricsAtZ) {
  auto c = client();
  const auto r = c.Get("/metrics?z=0.5,0.5");
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200);
  const json j = body_of(r);
  const ModelBundle& b = shared_bundle();
  RowVector z(2);
  z << 0.5, 0.5;
  const Positions p = decode(GraphContext::from(b.graph), b.params, z);
  EXPECT_EQ(j["crossings"], count_crossings(b.graph, p));
  EXPECT_EQ(j["crosslessness"].get<double>(), crosslessness(b.graph, p));
  EXPECT_EQ(c.Get("/metrics?z=2,0")->status, 400);
  EXPECT_EQ(c.Get("/metrics?z=abc")->status, 400);
  EXPECT_EQ(c.Get("/metrics")->status, 400);
}
