#include <random>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "bcensus/errors.hpp"
#include "bcensus/review_server.hpp"
#include "fixtures.hpp"

namespace bcensus {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::TempDir;

class ReviewServerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::mt19937_64 rng(21);
    std::vector<PnmImage> images;
    for (int i = 0; i < 16; ++i) images.push_back(testing::random_image(6, 5, 3, rng));
    CensusConfig config;
    config.source.type = SourceSpec::Type::manifest;
    config.source.path = testing::write_image_pool(dir_ / "pool", images).string();
    config.training_manifest = testing::write_image_pool(dir_ / "train", {images[2]}, "t").string();
    config.mode = TrialMode::human();
    config.k = 2;
    config.trials_per_probe = 3;
    create_human_session(dir_ / "s.json", config, 1);
    service_.emplace(dir_ / "s.json", ReviewServiceOptions{1, [] { return std::int64_t{42}; }});
    server_.emplace(*service_, ServerOptions{"127.0.0.1", 0, ui_dir()});
    port_ = server_->bind();
    thread_ = std::thread([this] { server_->run(); });
    client_.emplace("127.0.0.1", port_);
    for (int i = 0; i < 100 && !client_->Get("/api/stats"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }

  void TearDown() override {
    server_->stop();
    thread_.join();
  }

  virtual fs::path ui_dir() { return {}; }

  json get_json(const std::string& path, int expected = 200) {
    auto res = client_->Get(path);
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, expected) << path << ": " << res->body;
    EXPECT_EQ(res->get_header_value("Content-Type"), "application/json");
    return json::parse(res->body);
  }

  json post_verdict(const json& body, int expected = 200) {
    auto res = client_->Post("/api/verdict", body.dump(), "application/json");
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, expected) << res->body;
    return json::parse(res->body);
  }

  TempDir dir_;
  std::optional<ReviewService> service_;
  std::optional<ReviewServer> server_;
  std::optional<httplib::Client> client_;
  std::thread thread_;
  int port_ = 0;
};

TEST_F(ReviewServerTest, SessionAndStats) {
  const auto session = get_json("/api/session");
  EXPECT_EQ(session["config"]["mode"], "human");
  EXPECT_EQ(session["estimates"]["finished"], false);
  const auto stats = get_json("/api/stats");
  EXPECT_TRUE(stats["s_star"].is_null());
  EXPECT_EQ(stats["current_probe"]["batch_size"], 2);
  EXPECT_TRUE(stats["artifacts"]["rate"].is_null());
}

TEST_F(ReviewServerTest, VerdictLoopMatchesDirectCalls) {
  auto pairs = get_json("/api/pairs?state=pending&limit=10");
  ASSERT_FALSE(pairs.empty());
  const auto key = pairs[0]["pair_key"].get<std::string>();
  const auto stats = post_verdict({{"pair_key", key}, {"label", "artifact"}, {"note", "noise"}});
  EXPECT_EQ(stats["artifacts"]["count"], 2);
  EXPECT_EQ(stats["artifacts"]["rate"], 1.0);
  const auto resolved = get_json("/api/pairs?state=resolved");
  ASSERT_EQ(resolved.size(), 1u);
  EXPECT_EQ(resolved[0]["label"], "artifact");
  EXPECT_EQ(get_json("/api/stats"), service_->stats_json());
}

TEST_F(ReviewServerTest, ErrorStatuses) {
  const auto key = get_json("/api/pairs")[0]["pair_key"].get<std::string>();
  post_verdict({{"pair_key", key}, {"label", "maybe"}}, 400);
  post_verdict({{"pair_key", "0123456789abcdef"}, {"label", "distinct"}}, 404);
  post_verdict({{"label", "distinct"}}, 400);
  auto res = client_->Post("/api/verdict", "{oops", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  get_json("/api/pairs?state=weird", 400);
  get_json("/api/pairs?limit=-3", 400);
  get_json("/api/neighbor", 400);
  get_json("/api/neighbor?item=missing", 404);
}

TEST_F(ReviewServerTest, NeighborAndImages) {
  const auto n = get_json("/api/neighbor?item=img00002");
  EXPECT_EQ(n["neighbor"], "t00000");
  EXPECT_EQ(n["distance"], 0.0);
  EXPECT_EQ(n["image"], "/img/t00000?corpus=training");
  auto res = client_->Get("/img/img00004");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "image/bmp");
  EXPECT_EQ(res->body.size(), 54u + 20u * 5u);  // 6 px * 3 bytes = 18, padded to 20
  res = client_->Get("/img/t00000?corpus=training");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  res = client_->Get("/img/zzz");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
}

TEST_F(ReviewServerTest, PlaceholderPage) {
  auto res = client_->Get("/");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_NE(res->body.find("/api/"), std::string::npos);
}

TEST_F(ReviewServerTest, BusyPortFailsToBind) {
  ReviewServer second(*service_, ServerOptions{"127.0.0.1", port_, {}});
  EXPECT_THROW(second.bind(), InvalidInput);
}

class ReviewServerUiTest : public ReviewServerTest {
 protected:
  fs::path ui_dir() override {
    fs::create_directories(dir_ / "ui");
    write_file_atomic(dir_ / "ui" / "index.html", "<html>review ui</html>");
    return dir_ / "ui";
  }
};

TEST_F(ReviewServerUiTest, ServesStaticAssets) {
  auto res = client_->Get("/");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->body, "<html>review ui</html>");
  EXPECT_EQ(get_json("/api/stats")["finished"], false);
}

}  // namespace
}  // namespace bcensus
