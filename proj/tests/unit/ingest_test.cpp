#include <cstring>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "bcensus/errors.hpp"
#include "bcensus/ingest.hpp"
#include "fixtures.hpp"

namespace bcensus {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

TEST(PnmTest, RoundTripGrey8) {
  std::mt19937_64 rng(1);
  const auto img = testing::random_image(7, 5, 1, rng);
  const auto bytes = serialize_pnm(img);
  EXPECT_EQ(bytes.substr(0, 3), "P5\n");
  EXPECT_EQ(parse_pnm(bytes), img);
}

TEST(PnmTest, RoundTripRgb16) {
  PnmImage img{3, 2, 3, 65535, {}};
  for (std::size_t i = 0; i < 18; ++i) img.samples.push_back(static_cast<std::uint16_t>(i * 3000 + 7));
  const auto bytes = serialize_pnm(img);
  EXPECT_EQ(bytes.substr(0, 2), "P6");
  EXPECT_EQ(parse_pnm(bytes), img);
}

TEST(PnmTest, HeaderCommentsAndWhitespace) {
  const std::string bytes = std::string("P5 # comment\n2\t1\n# more\n255\n") + '\x00' + '\xff';
  const auto img = parse_pnm(bytes);
  EXPECT_EQ(img.width, 2u);
  EXPECT_EQ(img.samples, (std::vector<std::uint16_t>{0, 255}));
}

TEST(PnmTest, Errors) {
  EXPECT_THROW(parse_pnm("P3\n1 1\n255\n0 0 0\n"), UnsupportedFormat);
  EXPECT_THROW(parse_pnm("\x89PNG"), UnsupportedFormat);
  EXPECT_THROW(parse_pnm("P5\n4 4\n255\nab"), InvalidInput);
  EXPECT_THROW(parse_pnm("P5\n4 x\n255\n"), InvalidInput);
  EXPECT_THROW(parse_pnm("P5\n1 1\n0\n\x00"), InvalidInput);
}

TEST(PnmTest, ItemVectorScalesByMaxval) {
  PnmImage img{2, 1, 1, 1000, {0, 500}};
  const auto v = to_item_vector("x", img);
  EXPECT_EQ(v.kind, VectorKind::pixel);
  EXPECT_FLOAT_EQ(v.values[1], 0.5f);
}

TEST(PnmTest, IdenticalFilesHaveZeroDistance) {
  TempDir dir;
  std::mt19937_64 rng(2);
  const auto img = testing::random_image(8, 8, 3, rng);
  write_pnm(dir / "a.ppm", img);
  write_pnm(dir / "b.ppm", img);
  EXPECT_EQ(euclidean_distance(to_item_vector("a", read_pnm(dir / "a.ppm")),
                               to_item_vector("b", read_pnm(dir / "b.ppm"))),
            0.0);
}

TEST(BmpTest, Layout) {
  PnmImage img{3, 2, 1, 255, {10, 20, 30, 40, 50, 60}};
  const auto bmp = encode_bmp(img);
  ASSERT_EQ(bmp.substr(0, 2), "BM");
  const std::size_t row = 12;  // 3 px * 3 bytes, padded to 4
  EXPECT_EQ(bmp.size(), 54 + row * 2);
  std::uint32_t size = 0;
  std::memcpy(&size, bmp.data() + 2, 4);
  EXPECT_EQ(size, bmp.size());
  // Bottom-up: the first stored row is the last image row.
  EXPECT_EQ(static_cast<unsigned char>(bmp[54]), 40);
  EXPECT_EQ(static_cast<unsigned char>(bmp[54 + row]), 10);
}

TEST(EmbeddingTest, CsvExample) {
  const auto items = parse_embeddings_csv("a,1.0,2.0\nb,3.0,4.0");
  ASSERT_EQ(items.size(), 2u);
  EXPECT_EQ(items[1].id, "b");
  EXPECT_EQ(items[1].values, (std::vector<float>{3.0f, 4.0f}));
  EXPECT_EQ(items[0].kind, VectorKind::embedding);
}

TEST(EmbeddingTest, RaggedCsvNamesLine) {
  const auto msg = error_of([] { parse_embeddings_csv("a,1,2\nb,3\n"); });
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
  EXPECT_THROW(parse_embeddings_csv("a,1,zz\n"), InvalidInput);
}

TEST(EmbeddingTest, BinaryEmpty) {
  std::string bytes = "BPC1";
  bytes.append(8, '\0');
  EXPECT_TRUE(parse_embeddings_binary(bytes).empty());
}

TEST(EmbeddingTest, BinaryRoundTripIsBitExact) {
  std::mt19937_64 rng(3);
  auto items = testing::random_vectors(1000, 16, rng);
  for (std::size_t i = 0; i < items.size(); ++i) items[i].id = std::to_string(i);
  const auto back = parse_embeddings_binary(serialize_embeddings_binary(items));
  ASSERT_EQ(back.size(), items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    EXPECT_EQ(back[i].id, items[i].id);
    EXPECT_EQ(std::memcmp(back[i].values.data(), items[i].values.data(), 16 * sizeof(float)), 0);
  }
}

TEST(EmbeddingTest, BinaryLengthMismatchReportsBoth) {
  std::mt19937_64 rng(4);
  const auto items = testing::random_vectors(3, 4, rng);
  auto bytes = serialize_embeddings_binary(items);
  bytes.pop_back();
  const auto msg = error_of([&] { parse_embeddings_binary(bytes); });
  EXPECT_NE(msg.find("60"), std::string::npos) << msg;
  EXPECT_NE(msg.find("59"), std::string::npos) << msg;
  EXPECT_THROW(parse_embeddings_binary(bytes + "xx"), InvalidInput);
  EXPECT_THROW(parse_embeddings_binary("BPC2" + bytes.substr(4)), UnsupportedFormat);
}

TEST(EmbeddingTest, CsvRoundTrip) {
  std::mt19937_64 rng(5);
  const auto items = testing::random_vectors(10, 3, rng);
  const auto back = parse_embeddings_csv(serialize_embeddings_csv(items));
  ASSERT_EQ(back.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(back[i].values, items[i].values);
}

TEST(ManifestTest, JsonRoundTrip) {
  Manifest m;
  m.kind = VectorKind::embedding;
  m.embeddings_path = "emb.bin";
  m.items = {{"x", "", 0, "x.pgm"}, {"y", "", 1, ""}};
  EXPECT_EQ(manifest_from_json(to_json(m)), m);
  auto j = to_json(m);
  j["items"][1]["id"] = "x";
  EXPECT_THROW(manifest_from_json(j), InvalidInput);
  EXPECT_THROW(manifest_from_json(nlohmann::json::object()), InvalidInput);
}

TEST(ManifestTest, LoadsInManifestOrder) {
  TempDir dir;
  std::mt19937_64 rng(6);
  std::vector<PnmImage> images;
  for (int i = 0; i < 6; ++i) images.push_back(testing::random_image(4, 4, 1, rng));
  const auto manifest_path = testing::write_image_pool(dir.path(), images);
  auto manifest = read_manifest(manifest_path);
  std::reverse(manifest.items.begin(), manifest.items.end());
  write_manifest(manifest_path, manifest);
  const auto items = load_manifest_items(manifest_path, 3);
  ASSERT_EQ(items.size(), 6u);
  EXPECT_EQ(items[0].id, "img00005");
  EXPECT_EQ(items[0].values, to_item_vector("", images[5]).values);
}

TEST(ManifestTest, MissingAndMismatchedFilesAreNamed) {
  TempDir dir;
  std::mt19937_64 rng(7);
  const auto manifest_path =
      testing::write_image_pool(dir.path(), {testing::random_image(4, 4, 1, rng), testing::random_image(4, 4, 1, rng)});
  write_pnm(dir / "img00001.pgm", testing::random_image(5, 4, 1, rng));
  auto msg = error_of([&] { load_manifest_items(manifest_path, 1); });
  EXPECT_NE(msg.find("img00001.pgm"), std::string::npos) << msg;
  fs::remove(dir / "img00001.pgm");
  msg = error_of([&] { load_manifest_items(manifest_path, 1); });
  EXPECT_NE(msg.find("img00001.pgm"), std::string::npos) << msg;
}

TEST(ManifestTest, EmbeddingManifest) {
  TempDir dir;
  std::mt19937_64 rng(8);
  const auto rows = testing::random_vectors(4, 3, rng);
  write_file_atomic(dir / "emb.bin", serialize_embeddings_binary(rows));
  Manifest m;
  m.kind = VectorKind::embedding;
  m.embeddings_path = "emb.bin";
  m.items = {{"late", "", 3, ""}, {"early", "", 0, ""}};
  write_manifest(dir / "m.json", m);
  const auto items = load_manifest_items(dir / "m.json");
  ASSERT_EQ(items.size(), 2u);
  EXPECT_EQ(items[0].id, "late");
  EXPECT_EQ(items[0].values, rows[3].values);
  m.items.push_back({"bad", "", 9, ""});
  write_manifest(dir / "m.json", m);
  EXPECT_THROW(load_manifest_items(dir / "m.json"), InvalidInput);
}

TEST(FileTest, AtomicWriteReplaces) {
  TempDir dir;
  write_file_atomic(dir / "f", "one");
  write_file_atomic(dir / "f", "two");
  EXPECT_EQ(read_file_bytes(dir / "f"), "two");
  EXPECT_FALSE(fs::exists(dir / "f.tmp"));
  EXPECT_THROW(read_file_bytes(dir / "missing"), InvalidInput);
}

}  // namespace
}  // namespace bcensus
