#include "fixtures.hpp"

#include <algorithm>
#include <cstdio>

namespace bcensus::testing {

namespace fs = std::filesystem;

TempDir::TempDir() {
  std::random_device rd;
  const auto base = fs::temp_directory_path();
  for (;;) {
    char name[32];
    std::snprintf(name, sizeof name, "bcensus-%08x", rd());
    path_ = base / name;
    if (fs::create_directory(path_)) break;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

PnmImage random_image(std::size_t width, std::size_t height, std::size_t channels, std::mt19937_64& rng) {
  PnmImage img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.maxval = 255;
  img.samples.resize(width * height * channels);
  std::uniform_int_distribution<int> level(0, 255);
  for (auto& s : img.samples) s = static_cast<std::uint16_t>(level(rng));
  return img;
}

PnmImage perturb(const PnmImage& image, int max_step, std::mt19937_64& rng) {
  PnmImage out = image;
  std::uniform_int_distribution<int> step(-max_step, max_step);
  for (auto& s : out.samples) {
    s = static_cast<std::uint16_t>(std::clamp(static_cast<int>(s) + step(rng), 0, static_cast<int>(image.maxval)));
  }
  return out;
}

std::vector<ItemVector> random_vectors(std::size_t count, std::size_t dim, std::mt19937_64& rng,
                                       const std::string& prefix) {
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<ItemVector> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "%s%05zu", prefix.c_str(), i);
    out[i].id = id;
    out[i].kind = VectorKind::embedding;
    out[i].values.resize(dim);
    for (auto& v : out[i].values) v = normal(rng);
  }
  return out;
}

fs::path write_image_pool(const fs::path& dir, const std::vector<PnmImage>& images, const std::string& prefix) {
  fs::create_directories(dir);
  Manifest manifest;
  manifest.kind = VectorKind::pixel;
  manifest.source = "synthetic test pool";
  for (std::size_t i = 0; i < images.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "%s%05zu", prefix.c_str(), i);
    const std::string file = std::string(id) + (images[i].channels == 3 ? ".ppm" : ".pgm");
    write_pnm(dir / file, images[i]);
    manifest.items.push_back(ManifestItem{id, file, std::nullopt, ""});
  }
  const auto path = dir / "manifest.json";
  write_manifest(path, manifest);
  return path;
}

fs::path write_vector_pool(const fs::path& dir, const std::vector<ItemVector>& items) {
  fs::create_directories(dir);
  write_file_atomic(dir / "embeddings.bin", serialize_embeddings_binary(items));
  Manifest manifest;
  manifest.kind = VectorKind::embedding;
  manifest.embeddings_path = "embeddings.bin";
  for (std::size_t i = 0; i < items.size(); ++i) manifest.items.push_back(ManifestItem{items[i].id, "", i, ""});
  const auto path = dir / "manifest.json";
  write_manifest(path, manifest);
  return path;
}

PlantedPool make_planted_pool(const fs::path& dir, std::size_t total, std::size_t pairs, std::size_t side,
                              int max_step, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<PnmImage> images;
  images.reserve(total);
  for (std::size_t i = 0; i + pairs < total; ++i) images.push_back(random_image(side, side, 1, rng));
  std::vector<std::pair<std::size_t, std::size_t>> planted_idx;
  for (std::size_t p = 0; p < pairs; ++p) {
    // Twins of distinct originals so every planted pair is its own cluster.
    images.push_back(perturb(images[p], max_step, rng));
    planted_idx.emplace_back(p, images.size() - 1);
  }
  std::vector<std::size_t> order(images.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> position(images.size());
  std::vector<PnmImage> shuffled(images.size());
  for (std::size_t slot = 0; slot < order.size(); ++slot) {
    shuffled[slot] = std::move(images[order[slot]]);
    position[order[slot]] = slot;
  }
  PlantedPool out;
  out.manifest = write_image_pool(dir, shuffled);
  for (const auto& [a, b] : planted_idx) {
    char ia[32];
    char ib[32];
    std::snprintf(ia, sizeof ia, "img%05zu", position[a]);
    std::snprintf(ib, sizeof ib, "img%05zu", position[b]);
    out.planted.emplace_back(ia, ib);
  }
  return out;
}

}  // namespace bcensus::testing
