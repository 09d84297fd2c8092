#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bcensus/similarity.hpp"

namespace bcensus {

// Binary netpbm image: P5 (grey, 1 channel) or P6 (RGB, 3 channels).
// Samples are row-major, channel-interleaved.
struct PnmImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  unsigned maxval = 255;
  std::vector<std::uint16_t> samples;

  friend bool operator==(const PnmImage&, const PnmImage&) = default;
};

// `name` only labels error messages. Throws UnsupportedFormat for any magic
// other than P5/P6 and InvalidInput for malformed or truncated data.
PnmImage parse_pnm(std::string_view bytes, std::string_view name = "<memory>");
PnmImage read_pnm(const std::filesystem::path& path);
// Canonical header "P5\n<w> <h>\n<maxval>\n"; 16-bit samples are big-endian.
std::string serialize_pnm(const PnmImage& image);
void write_pnm(const std::filesystem::path& path, const PnmImage& image);

// Pixels divided by maxval.
ItemVector to_item_vector(std::string id, const PnmImage& image);

// Uncompressed 24-bit BMP, which browsers render without loss for 8-bit data.
std::string encode_bmp(const PnmImage& image);

enum class EmbeddingFormat { csv, binary };

std::string_view to_string(EmbeddingFormat format) noexcept;
EmbeddingFormat parse_embedding_format(std::string_view text);

struct ManifestItem {
  std::string id;
  std::string path;                // image path, relative to the manifest directory
  std::optional<std::size_t> row;  // embedding row
  std::string image;               // optional display image for embedding items

  friend bool operator==(const ManifestItem&, const ManifestItem&) = default;
};

inline constexpr std::string_view kManifestVersion = "bcensus-manifest/1";

struct Manifest {
  std::string version{kManifestVersion};
  VectorKind kind = VectorKind::pixel;
  std::vector<ManifestItem> items;
  std::string source;                  // free text, e.g. which model produced the pool
  std::string embeddings_path;         // embedding kind only
  EmbeddingFormat embeddings_format = EmbeddingFormat::binary;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

nlohmann::json to_json(const Manifest& manifest);
// Throws InvalidInput on schema violations and duplicate ids.
Manifest manifest_from_json(const nlohmann::json& j);
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

// Loads every manifest item from `dir` in manifest order. All images must
// share dimensions; the first mismatch is reported by file name.
std::vector<ItemVector> load_images(const std::filesystem::path& dir, const Manifest& manifest,
                                    unsigned threads = 0);

// CSV: "id,v1,v2,..." per line with constant arity. Binary: "BPC1", u32 count,
// u32 dim (little-endian), then count*dim little-endian float32, row-major;
// ids are the row indices.
std::vector<ItemVector> load_embeddings(const std::filesystem::path& path, EmbeddingFormat format);
std::vector<ItemVector> parse_embeddings_csv(std::string_view text);
std::vector<ItemVector> parse_embeddings_binary(std::string_view bytes);
std::string serialize_embeddings_binary(std::span<const ItemVector> items);
std::string serialize_embeddings_csv(std::span<const ItemVector> items);

// Resolves a manifest of either kind relative to its own directory.
std::vector<ItemVector> load_manifest_items(const std::filesystem::path& manifest_path,
                                            unsigned threads = 0);

// Path of the displayable image for `id`, or empty when the manifest has none.
std::filesystem::path image_path_for(const std::filesystem::path& manifest_path, const Manifest& manifest,
                                     std::string_view id);

std::string read_file_bytes(const std::filesystem::path& path);
// Writes via a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace bcensus
