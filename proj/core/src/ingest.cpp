#include "bcensus/ingest.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <fcntl.h>
#include <unistd.h>

#include "bcensus/errors.hpp"
#include "bcensus/parallel.hpp"

namespace bcensus {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kEmbeddingMagic = "BPC1";
constexpr std::size_t kEmbeddingHeader = 12;

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f'; }

// Reads one unsigned header token, skipping whitespace and '#' comments.
std::size_t header_number(std::string_view bytes, std::size_t& pos, std::string_view name, const char* what) {
  for (;;) {
    while (pos < bytes.size() && is_space(bytes[pos])) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(bytes.data() + pos, bytes.data() + bytes.size(), value);
  if (ec != std::errc() || ptr == bytes.data() + pos) {
    throw InvalidInput(std::string(name) + ": malformed header (" + what + ")");
  }
  pos = static_cast<std::size_t>(ptr - bytes.data());
  return value;
}

std::uint32_t read_u32_le(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[offset + static_cast<std::size_t>(i)]);
  return v;
}

void append_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::string read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  const fs::path tmp = path.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw InvalidInput("cannot create " + tmp.string());
  std::size_t written = 0;
  while (written < bytes.size()) {
    const auto n = ::write(fd, bytes.data() + written, bytes.size() - written);
    if (n <= 0) {
      ::close(fd);
      throw InvalidInput("short write to " + tmp.string());
    }
    written += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw InvalidInput("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

PnmImage parse_pnm(std::string_view bytes, std::string_view name) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw UnsupportedFormat(std::string(name) + ": unsupported image format (only binary PGM P5 / PPM P6)");
  }
  PnmImage img;
  img.channels = bytes[1] == '5' ? 1 : 3;
  std::size_t pos = 2;
  img.width = header_number(bytes, pos, name, "width");
  img.height = header_number(bytes, pos, name, "height");
  const std::size_t maxval = header_number(bytes, pos, name, "maxval");
  if (img.width == 0 || img.height == 0) throw InvalidInput(std::string(name) + ": zero image dimension");
  if (maxval == 0 || maxval > 65535) throw InvalidInput(std::string(name) + ": maxval must be in [1, 65535]");
  img.maxval = static_cast<unsigned>(maxval);
  if (pos >= bytes.size() || !is_space(bytes[pos])) {
    throw InvalidInput(std::string(name) + ": missing whitespace after header");
  }
  ++pos;

  const std::size_t count = img.width * img.height * img.channels;
  const std::size_t bytes_per_sample = img.maxval < 256 ? 1 : 2;
  const std::size_t expected = count * bytes_per_sample;
  if (bytes.size() - pos < expected) {
    throw InvalidInput(std::string(name) + ": truncated pixel data (expected " + std::to_string(expected) +
                       " bytes, found " + std::to_string(bytes.size() - pos) + ")");
  }
  img.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint16_t v = 0;
    if (bytes_per_sample == 1) {
      v = static_cast<unsigned char>(bytes[pos + i]);
    } else {
      v = static_cast<std::uint16_t>((static_cast<unsigned char>(bytes[pos + 2 * i]) << 8) |
                                     static_cast<unsigned char>(bytes[pos + 2 * i + 1]));
    }
    if (v > img.maxval) throw InvalidInput(std::string(name) + ": sample exceeds maxval");
    img.samples[i] = v;
  }
  return img;
}

PnmImage read_pnm(const fs::path& path) { return parse_pnm(read_file_bytes(path), path.string()); }

std::string serialize_pnm(const PnmImage& image) {
  if (image.channels != 1 && image.channels != 3) throw InvalidArgument("PNM images have 1 or 3 channels");
  if (image.samples.size() != image.width * image.height * image.channels) {
    throw InvalidArgument("sample count does not match image dimensions");
  }
  std::string out = (image.channels == 1 ? "P5\n" : "P6\n") + std::to_string(image.width) + " " +
                    std::to_string(image.height) + "\n" + std::to_string(image.maxval) + "\n";
  const bool wide = image.maxval >= 256;
  out.reserve(out.size() + image.samples.size() * (wide ? 2 : 1));
  for (const auto v : image.samples) {
    if (wide) out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xFF));
  }
  return out;
}

void write_pnm(const fs::path& path, const PnmImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot create " + path.string());
  const auto bytes = serialize_pnm(image);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ItemVector to_item_vector(std::string id, const PnmImage& image) {
  ItemVector item;
  item.id = std::move(id);
  item.kind = VectorKind::pixel;
  item.values.resize(image.samples.size());
  const double scale = 1.0 / static_cast<double>(image.maxval);
  for (std::size_t i = 0; i < image.samples.size(); ++i) {
    item.values[i] = static_cast<float>(static_cast<double>(image.samples[i]) * scale);
  }
  return item;
}

std::string_view to_string(EmbeddingFormat format) noexcept {
  return format == EmbeddingFormat::csv ? "csv" : "binary";
}

EmbeddingFormat parse_embedding_format(std::string_view text) {
  if (text == "csv") return EmbeddingFormat::csv;
  if (text == "binary") return EmbeddingFormat::binary;
  throw InvalidArgument("unknown embedding format '" + std::string(text) + "' (expected csv or binary)");
}

nlohmann::json to_json(const Manifest& m) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& item : m.items) {
    nlohmann::json j = {{"id", item.id}};
    if (!item.path.empty()) j["path"] = item.path;
    if (item.row) j["row"] = *item.row;
    if (!item.image.empty()) j["image"] = item.image;
    items.push_back(std::move(j));
  }
  nlohmann::json j = {
      {"version", m.version},
      {"kind", std::string(to_string(m.kind))},
      {"source", m.source},
      {"items", std::move(items)},
  };
  if (m.kind == VectorKind::embedding) {
    j["embeddings"] = {{"path", m.embeddings_path}, {"format", std::string(to_string(m.embeddings_format))}};
  }
  return j;
}

Manifest manifest_from_json(const nlohmann::json& j) {
  try {
    Manifest m;
    m.version = j.at("version").get<std::string>();
    if (m.version != kManifestVersion) throw InvalidInput("unsupported manifest version '" + m.version + "'");
    m.kind = parse_vector_kind(j.at("kind").get<std::string>());
    m.source = j.value("source", std::string{});
    if (m.kind == VectorKind::embedding) {
      const auto& e = j.at("embeddings");
      m.embeddings_path = e.at("path").get<std::string>();
      m.embeddings_format = parse_embedding_format(e.value("format", std::string("binary")));
    }
    std::unordered_set<std::string> seen;
    for (const auto& ji : j.at("items")) {
      ManifestItem item;
      item.id = ji.at("id").get<std::string>();
      if (item.id.empty()) throw InvalidInput("manifest item with empty id");
      if (!seen.insert(item.id).second) throw InvalidInput("duplicate manifest id '" + item.id + "'");
      item.path = ji.value("path", std::string{});
      if (ji.contains("row")) item.row = ji.at("row").get<std::size_t>();
      item.image = ji.value("image", std::string{});
      if (m.kind == VectorKind::pixel && item.path.empty()) {
        throw InvalidInput("pixel manifest item '" + item.id + "' has no path");
      }
      if (m.kind == VectorKind::embedding && !item.row) {
        throw InvalidInput("embedding manifest item '" + item.id + "' has no row");
      }
      m.items.push_back(std::move(item));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed manifest: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw InvalidInput(std::string("malformed manifest: ") + e.what());
  }
}

Manifest read_manifest(const fs::path& path) {
  const auto text = read_file_bytes(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  write_file_atomic(path, to_json(manifest).dump(2) + "\n");
}

std::vector<ItemVector> load_images(const fs::path& dir, const Manifest& manifest, unsigned threads) {
  if (manifest.kind != VectorKind::pixel) throw InvalidInput("load_images needs a pixel manifest");
  const auto& items = manifest.items;
  std::vector<PnmImage> images(items.size());
  parallel_slices(items.size(), threads, [&](unsigned, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto path = dir / items[i].path;
      if (!fs::exists(path)) throw InvalidInput("manifest item '" + items[i].id + "': missing file " + path.string());
      images[i] = read_pnm(path);
    }
  });

  std::vector<ItemVector> out;
  out.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& img = images[i];
    const auto& ref = images.front();
    if (img.width != ref.width || img.height != ref.height || img.channels != ref.channels) {
      throw InvalidInput("image " + (dir / items[i].path).string() + " is " + std::to_string(img.width) + "x" +
                         std::to_string(img.height) + "x" + std::to_string(img.channels) + ", expected " +
                         std::to_string(ref.width) + "x" + std::to_string(ref.height) + "x" +
                         std::to_string(ref.channels));
    }
    out.push_back(to_item_vector(items[i].id, img));
  }
  return out;
}

std::vector<ItemVector> parse_embeddings_csv(std::string_view text) {
  std::vector<ItemVector> out;
  std::size_t arity = 0;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(start, end - start));
    ++line_no;
    start = end + 1;
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    ItemVector item;
    item.kind = VectorKind::embedding;
    std::size_t field_start = 0;
    bool first = true;
    while (field_start <= line.size()) {
      auto comma = line.find(',', field_start);
      if (comma == std::string_view::npos) comma = line.size();
      const auto field = trim(line.substr(field_start, comma - field_start));
      if (first) {
        if (field.empty()) throw InvalidInput("line " + std::to_string(line_no) + ": empty id");
        item.id = std::string(field);
        first = false;
      } else {
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
        if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
          throw InvalidInput("line " + std::to_string(line_no) + ": not a decimal value: '" + std::string(field) + "'");
        }
        item.values.push_back(static_cast<float>(v));
      }
      field_start = comma + 1;
      if (comma == line.size()) break;
    }
    if (out.empty()) {
      arity = item.values.size();
    } else if (item.values.size() != arity) {
      throw InvalidInput("line " + std::to_string(line_no) + ": ragged row with " + std::to_string(item.values.size()) +
                         " values, expected " + std::to_string(arity));
    }
    out.push_back(std::move(item));
    if (end == text.size()) break;
  }
  return out;
}

std::vector<ItemVector> parse_embeddings_binary(std::string_view bytes) {
  if (bytes.size() < kEmbeddingHeader || bytes.substr(0, 4) != kEmbeddingMagic) {
    throw UnsupportedFormat("embedding file does not start with BPC1 magic");
  }
  const std::uint64_t count = read_u32_le(bytes, 4);
  const std::uint64_t dim = read_u32_le(bytes, 8);
  const std::uint64_t expected = kEmbeddingHeader + 4 * count * dim;
  if (bytes.size() != expected) {
    throw InvalidInput("embedding payload size mismatch: expected " + std::to_string(expected) + " bytes, found " +
                       std::to_string(bytes.size()));
  }
  std::vector<ItemVector> out(count);
  std::size_t offset = kEmbeddingHeader;
  for (std::uint64_t r = 0; r < count; ++r) {
    auto& item = out[r];
    item.id = std::to_string(r);
    item.kind = VectorKind::embedding;
    item.values.resize(dim);
    for (auto& v : item.values) {
      v = std::bit_cast<float>(read_u32_le(bytes, offset));
      offset += 4;
    }
  }
  return out;
}

std::string serialize_embeddings_binary(std::span<const ItemVector> items) {
  const std::size_t dim = items.empty() ? 0 : items.front().values.size();
  std::string out(kEmbeddingMagic);
  append_u32_le(out, static_cast<std::uint32_t>(items.size()));
  append_u32_le(out, static_cast<std::uint32_t>(dim));
  out.reserve(kEmbeddingHeader + 4 * items.size() * dim);
  for (const auto& item : items) {
    if (item.values.size() != dim) throw InvalidArgument("embedding rows must share one dimension");
    for (const float v : item.values) append_u32_le(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

std::string serialize_embeddings_csv(std::span<const ItemVector> items) {
  std::string out;
  char buf[64];
  for (const auto& item : items) {
    out += item.id;
    for (const float v : item.values) {
      const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out.push_back(',');
      out.append(buf, ptr);
    }
    out.push_back('\n');
  }
  return out;
}

std::vector<ItemVector> load_embeddings(const fs::path& path, EmbeddingFormat format) {
  const auto bytes = read_file_bytes(path);
  try {
    return format == EmbeddingFormat::csv ? parse_embeddings_csv(bytes) : parse_embeddings_binary(bytes);
  } catch (const InvalidInput& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

std::vector<ItemVector> load_manifest_items(const fs::path& manifest_path, unsigned threads) {
  const auto manifest = read_manifest(manifest_path);
  const auto dir = manifest_path.parent_path();
  if (manifest.kind == VectorKind::pixel) return load_images(dir, manifest, threads);

  const auto rows = load_embeddings(dir / manifest.embeddings_path, manifest.embeddings_format);
  std::vector<ItemVector> out;
  out.reserve(manifest.items.size());
  for (const auto& item : manifest.items) {
    if (*item.row >= rows.size()) {
      throw InvalidInput("manifest item '" + item.id + "' refers to row " + std::to_string(*item.row) + " of " +
                         std::to_string(rows.size()));
    }
    ItemVector v = rows[*item.row];
    v.id = item.id;
    out.push_back(std::move(v));
  }
  return out;
}

fs::path image_path_for(const fs::path& manifest_path, const Manifest& manifest, std::string_view id) {
  for (const auto& item : manifest.items) {
    if (item.id != id) continue;
    const auto& rel = manifest.kind == VectorKind::pixel ? item.path : item.image;
    if (rel.empty()) return {};
    return manifest_path.parent_path() / rel;
  }
  return {};
}

}  // namespace bcensus
