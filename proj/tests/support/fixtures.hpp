#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "bcensus/ingest.hpp"
#include "bcensus/similarity.hpp"

namespace bcensus::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

PnmImage random_image(std::size_t width, std::size_t height, std::size_t channels, std::mt19937_64& rng);

// Copy of `image` with every sample moved by a random amount in
// [-max_step, max_step], clamped to the valid range.
PnmImage perturb(const PnmImage& image, int max_step, std::mt19937_64& rng);

std::vector<ItemVector> random_vectors(std::size_t count, std::size_t dim, std::mt19937_64& rng,
                                       const std::string& prefix = "v");

// Writes img00000.pgm... plus manifest.json into `dir`; returns the manifest path.
std::filesystem::path write_image_pool(const std::filesystem::path& dir, const std::vector<PnmImage>& images,
                                       const std::string& prefix = "img");

// Writes the vectors as a binary embedding file plus manifest.json.
std::filesystem::path write_vector_pool(const std::filesystem::path& dir, const std::vector<ItemVector>& items);

struct PlantedPool {
  std::filesystem::path manifest;
  std::vector<std::pair<std::string, std::string>> planted;  // id pairs
};

// `total` greyscale images of which `pairs` are perturbed copies of other
// images in the pool. Item order is shuffled.
PlantedPool make_planted_pool(const std::filesystem::path& dir, std::size_t total, std::size_t pairs,
                              std::size_t side, int max_step, std::uint64_t seed);

}  // namespace bcensus::testing
