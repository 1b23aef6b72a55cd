#include "revrec/embedding.hpp"

#include "revrec/sidecar_client.hpp"
#include "revrec/textprep.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <unordered_map>

namespace revrec::embedding {

namespace {

constexpr std::uint64_t kFnvOffset = 0xCBF29CE484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001B3ULL;

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = kFnvOffset;
  for (unsigned char c : data) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

static_assert(std::endian::native == std::endian::little, "cache format assumes a little-endian host");

}  // namespace

ContentHash sha256(std::string_view data) {
  ContentHash out{};
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), out.data());
  return out;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xF]);
  }
  return out;
}

void EmbedderConfig::validate() const {
  switch (backend) {
    case Backend::kHash:
      if (dim < kMinHashDim) {
        throw Error(ErrorCode::kInvalidArgument, "hash backend needs dim >= " + std::to_string(kMinHashDim));
      }
      break;
    case Backend::kSidecar:
      if (endpoint.empty()) throw Error(ErrorCode::kInvalidArgument, "sidecar backend needs an endpoint");
      break;
  }
}

double dot(std::span<const float> a, std::span<const float> b) noexcept {
  double lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  const std::size_t n = std::min(a.size(), b.size());
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t k = 0; k < 8; ++k) {
      lanes[k] += static_cast<double>(a[i + k]) * static_cast<double>(b[i + k]);
    }
  }
  for (std::size_t k = 0; i < n; ++i, ++k) {
    lanes[k] += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
}

double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "cosine of " + std::to_string(a.size()) + "-dim and " + std::to_string(b.size()) + "-dim vectors");
  }
  const double norms = std::sqrt(dot(a, a)) * std::sqrt(dot(b, b));
  if (norms == 0.0) throw Error(ErrorCode::kZeroVector, "cosine with a zero vector");
  return std::clamp(dot(a, b) / norms, -1.0, 1.0);
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) { return cosine(a.values, b.values); }

void normalize(std::vector<float>& values) {
  double sum = 0.0;
  for (float v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kZeroVector, "vector has non-finite components");
    sum += static_cast<double>(v) * static_cast<double>(v);
  }
  const double norm = std::sqrt(sum);
  if (norm == 0.0) throw Error(ErrorCode::kZeroVector, "cannot normalize a zero vector");
  for (float& v : values) v = static_cast<float>(static_cast<double>(v) / norm);
}

bool is_unit_norm(std::span<const float> values, double tolerance) {
  double sum = 0.0;
  for (float v : values) {
    if (!std::isfinite(v)) return false;
    sum += static_cast<double>(v) * static_cast<double>(v);
  }
  return std::abs(std::sqrt(sum) - 1.0) <= tolerance;
}

EmbeddingVector hash_embed(std::span<const std::string> tokens, std::size_t dim, std::uint64_t seed) {
  if (tokens.empty()) throw Error(ErrorCode::kEmptyTextEmbedding, "no tokens to embed");
  if (dim < kMinHashDim) throw Error(ErrorCode::kInvalidArgument, "hash embedding dim must be >= 8");

  std::vector<double> acc(dim, 0.0);
  const std::uint64_t seed_mix = splitmix64(seed);
  for (const auto& token : tokens) {
    const std::uint64_t base = fnv1a64(token) ^ seed_mix;
    std::size_t first = 0;
    for (std::uint64_t j = 0; j < 2; ++j) {
      const std::uint64_t h = splitmix64(base + j);
      std::size_t idx = static_cast<std::size_t>(h % dim);
      if (j == 1 && idx == first) idx = (idx + 1) % dim;
      if (j == 0) first = idx;
      acc[idx] += (h >> 63) ? -1.0 : 1.0;
    }
  }
  double norm_sq = 0.0;
  for (double v : acc) norm_sq += v * v;
  const double norm = std::sqrt(norm_sq);
  if (norm == 0.0) throw Error(ErrorCode::kZeroVector, "token buckets cancelled to a zero vector");

  EmbeddingVector out;
  out.values.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) out.values[i] = static_cast<float>(acc[i] / norm);
  std::string joined;
  for (const auto& token : tokens) {
    if (!joined.empty()) joined.push_back(' ');
    joined += token;
  }
  out.source_hash = sha256(joined);
  return out;
}

HashEmbedder::HashEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim_ < kMinHashDim) throw Error(ErrorCode::kInvalidArgument, "hash backend needs dim >= 8");
}

std::string HashEmbedder::backend_id() const { return "hash-v1/seed=" + std::to_string(seed_); }

std::vector<std::vector<float>> HashEmbedder::embed_batch(std::span<const std::string> cleaned_texts) {
  std::vector<std::vector<float>> out;
  out.reserve(cleaned_texts.size());
  for (const auto& text : cleaned_texts) {
    const auto tokens = textprep::split_tokens(text);
    out.push_back(hash_embed(tokens, dim_, seed_).values);
  }
  return out;
}

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& config) {
  config.validate();
  switch (config.backend) {
    case Backend::kHash:
      return std::make_unique<HashEmbedder>(config.dim, config.seed);
    case Backend::kSidecar:
      return std::make_unique<SidecarEmbedder>(config.endpoint, config.dim);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown embedding backend");
}

// ---------------------------------------------------------------- cache

std::size_t EmbeddingCache::KeyHash::operator()(const ContentHash& k) const noexcept {
  std::size_t h;
  std::memcpy(&h, k.data(), sizeof(h));
  return h;
}

EmbeddingCache::EmbeddingCache(const std::filesystem::path& path) : path_(path) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read cache " + path.string());
  const auto file_size = std::filesystem::file_size(path);
  std::uint64_t offset = 0;
  while (true) {
    ContentHash key;
    std::uint32_t dim = 0;
    if (file_size - offset < key.size() + sizeof(dim)) break;
    in.read(reinterpret_cast<char*>(key.data()), key.size());
    in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
    const std::uint64_t payload = std::uint64_t{dim} * sizeof(float);
    if (file_size - offset - key.size() - sizeof(dim) < payload) break;
    std::vector<float> values(dim);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(payload));
    if (!in) throw Error(ErrorCode::kIo, "read failure on cache " + path.string());
    if (dim == 0 || !is_unit_norm(values)) {
      throw Error(ErrorCode::kIo, "corrupt cache " + path.string() + ": record at byte " + std::to_string(offset) +
                                      " is not a unit vector");
    }
    entries_.insert_or_assign(key, std::move(values));
    offset += key.size() + sizeof(dim) + payload;
  }
  truncated_bytes_ = static_cast<std::size_t>(file_size - offset);
  if (truncated_bytes_ > 0) {
    in.close();
    std::filesystem::resize_file(path, offset, ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot repair truncated cache " + path.string() + ": " + ec.message());
  }
}

ContentHash EmbeddingCache::make_key(std::string_view backend_id, std::size_t dim, std::string_view cleaned_text) {
  std::string material;
  material.reserve(backend_id.size() + cleaned_text.size() + 24);
  material.append(backend_id);
  material.push_back('\0');
  material.append(std::to_string(dim));
  material.push_back('\0');
  material.append(cleaned_text);
  return sha256(material);
}

std::optional<std::vector<float>> EmbeddingCache::lookup(const ContentHash& key) const {
  std::shared_lock lock(mutex_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::insert(const ContentHash& key, std::span<const float> values) {
  std::unique_lock lock(mutex_);
  if (entries_.contains(key)) return;
  if (path_) {
    std::ofstream out(*path_, std::ios::binary | std::ios::app);
    if (!out) throw Error(ErrorCode::kIo, "cannot append to cache " + path_->string());
    const auto dim = static_cast<std::uint32_t>(values.size());
    out.write(reinterpret_cast<const char*>(key.data()), key.size());
    out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
    if (!out) throw Error(ErrorCode::kIo, "write failure on cache " + path_->string());
  }
  entries_.emplace(key, std::vector<float>(values.begin(), values.end()));
}

// ---------------------------------------------------------------- driver

EmbeddingVector embed(std::string_view text, Embedder& embedder, EmbeddingCache* cache) {
  const std::string input(text);
  auto out = embed_corpus(std::span<const std::string>(&input, 1), embedder, cache);
  return std::move(*out.front());
}

std::vector<std::optional<EmbeddingVector>> embed_corpus(std::span<const std::string> texts, Embedder& embedder,
                                                         EmbeddingCache* cache, const EmbedCorpusOptions& options) {
  const std::size_t max_batch = std::clamp<std::size_t>(options.max_batch, 1, kMaxSidecarBatch);
  std::vector<std::optional<EmbeddingVector>> out(texts.size());

  // Distinct cleaned texts still needing the backend, with the positions they fill.
  std::vector<std::string> pending;
  std::vector<std::vector<std::size_t>> pending_slots;
  std::unordered_map<std::string, std::size_t> pending_index;
  const std::string backend = embedder.backend_id();
  const std::size_t key_dim = embedder.dim();

  for (std::size_t i = 0; i < texts.size(); ++i) {
    auto cleaned = textprep::clean_for_embedding(texts[i]);
    if (cleaned.token_count == 0) {
      if (options.strict) {
        throw IndexedError(ErrorCode::kEmptyTextEmbedding, i, "text has no tokens after cleaning");
      }
      continue;
    }
    if (cache) {
      if (auto hit = cache->lookup(EmbeddingCache::make_key(backend, key_dim, cleaned.cleaned))) {
        out[i] = EmbeddingVector{std::move(*hit), sha256(cleaned.cleaned)};
        continue;
      }
    }
    const auto [it, inserted] = pending_index.try_emplace(cleaned.cleaned, pending.size());
    if (inserted) {
      pending.push_back(std::move(cleaned.cleaned));
      pending_slots.emplace_back();
    }
    pending_slots[it->second].push_back(i);
  }

  for (std::size_t begin = 0; begin < pending.size(); begin += max_batch) {
    const std::size_t end = std::min(pending.size(), begin + max_batch);
    const std::span<const std::string> batch(pending.data() + begin, end - begin);
    std::vector<std::vector<float>> vectors;
    try {
      vectors = embedder.embed_batch(batch);
    } catch (const Error& e) {
      throw IndexedError(e.code(), pending_slots[begin].front(), e.what());
    }
    if (vectors.size() != batch.size()) {
      throw IndexedError(ErrorCode::kDimensionMismatch, pending_slots[begin].front(),
                         "backend returned " + std::to_string(vectors.size()) + " vectors for " +
                             std::to_string(batch.size()) + " texts");
    }
    for (std::size_t j = 0; j < batch.size(); ++j) {
      auto& values = vectors[j];
      const std::size_t first_slot = pending_slots[begin + j].front();
      if (embedder.dim() != 0 && values.size() != embedder.dim()) {
        throw IndexedError(ErrorCode::kDimensionMismatch, first_slot,
                           "expected " + std::to_string(embedder.dim()) + " components, got " +
                               std::to_string(values.size()));
      }
      if (!is_unit_norm(values)) {
        try {
          normalize(values);
        } catch (const Error& e) {
          throw IndexedError(e.code(), first_slot, e.what());
        }
      }
      const ContentHash hash = sha256(batch[j]);
      if (cache) cache->insert(EmbeddingCache::make_key(backend, key_dim, batch[j]), values);
      for (std::size_t slot : pending_slots[begin + j]) out[slot] = EmbeddingVector{values, hash};
    }
  }
  return out;
}

}  // namespace revrec::embedding
