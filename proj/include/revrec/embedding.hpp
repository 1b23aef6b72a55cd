#pragma once

#include "revrec/error.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace revrec::embedding {

using ContentHash = std::array<std::uint8_t, 32>;

ContentHash sha256(std::string_view data);
std::string to_hex(std::span<const std::uint8_t> bytes);

inline constexpr double kUnitNormTolerance = 1e-5;
inline constexpr std::size_t kMaxSidecarBatch = 64;
inline constexpr std::size_t kMinHashDim = 8;

/// L2-normalized embedding of a cleaned text.
struct EmbeddingVector {
  std::vector<float> values;
  ContentHash source_hash{};  // sha256 of the cleaned text

  std::size_t dim() const noexcept { return values.size(); }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

enum class Backend { kHash, kSidecar };

struct EmbedderConfig {
  Backend backend = Backend::kHash;
  std::size_t dim = 256;  // hash backend; for the sidecar 0 accepts whatever the server reports
  std::string endpoint;   // "host:port" or "stdio:<command>"
  std::optional<std::filesystem::path> cache_path;
  std::uint64_t seed = 42;

  void validate() const;
};

/// Dot product accumulated in double over eight interleaved lanes
/// (lane k sums indices i with i % 8 == k), combined as
/// ((l0+l1)+(l2+l3))+((l4+l5)+(l6+l7)). The fixed order makes results
/// reproducible bit-for-bit regardless of how callers partition work.
double dot(std::span<const float> a, std::span<const float> b) noexcept;

/// Full cosine: sum(a*b) / (|a| |b|). Throws DimensionMismatch / ZeroVector.
double cosine(std::span<const float> a, std::span<const float> b);
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

/// Normalizes in place (double-precision norm). Throws ZeroVector for zero
/// or non-finite input.
void normalize(std::vector<float>& values);

bool is_unit_norm(std::span<const float> values, double tolerance = kUnitNormTolerance);

/// Deterministic feature-hashing embedding. Every token contributes +-1 to
/// two distinct buckets chosen by a seeded 64-bit hash; the sum is
/// L2-normalized. See docs/hash_embedder.md.
EmbeddingVector hash_embed(std::span<const std::string> tokens, std::size_t dim, std::uint64_t seed = 42);

/// Backend interface. Inputs are cleaned texts (clean_for_embedding output),
/// each with at least one token; outputs are unit-norm vectors.
class Embedder {
 public:
  virtual ~Embedder() = default;

  /// Identifies the backend and its parameters for cache keys.
  virtual std::string backend_id() const = 0;
  /// 0 while unknown (a sidecar reports its dimension on first use).
  virtual std::size_t dim() const = 0;
  virtual std::vector<std::vector<float>> embed_batch(std::span<const std::string> cleaned_texts) = 0;
};

class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dim = 256, std::uint64_t seed = 42);

  std::string backend_id() const override;
  std::size_t dim() const override { return dim_; }
  std::vector<std::vector<float>> embed_batch(std::span<const std::string> cleaned_texts) override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& config);

/// Content-addressed, append-only vector cache.
///
/// File layout: a sequence of records `key[32] | dim:u32le | dim x f32le`.
/// A truncated trailing record (interrupted append) is cut off on open; any
/// complete record that is not unit-norm and finite makes the file corrupt.
/// Lookups may run concurrently; inserts must come from a single writer.
class EmbeddingCache {
 public:
  EmbeddingCache() = default;  // memory only
  explicit EmbeddingCache(const std::filesystem::path& path);

  static ContentHash make_key(std::string_view backend_id, std::size_t dim, std::string_view cleaned_text);

  std::optional<std::vector<float>> lookup(const ContentHash& key) const;
  void insert(const ContentHash& key, std::span<const float> values);

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t truncated_bytes() const noexcept { return truncated_bytes_; }

 private:
  struct KeyHash {
    std::size_t operator()(const ContentHash& k) const noexcept;
  };

  std::optional<std::filesystem::path> path_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<ContentHash, std::vector<float>, KeyHash> entries_;
  std::size_t truncated_bytes_ = 0;
};

/// Error raised by embed_corpus for a specific input position.
class IndexedError : public Error {
 public:
  IndexedError(ErrorCode code, std::size_t index, const std::string& message)
      : Error(code, "text #" + std::to_string(index) + ": " + message), index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

EmbeddingVector embed(std::string_view text, Embedder& embedder, EmbeddingCache* cache = nullptr);

struct EmbedCorpusOptions {
  /// Strict: a text that cleans to zero tokens raises EmptyTextEmbedding
  /// naming its index. Otherwise it yields nullopt.
  bool strict = true;
  std::size_t max_batch = kMaxSidecarBatch;
};

/// Order-preserving batch embedding. Duplicate cleaned texts and cache hits
/// are sent to the backend at most once.
std::vector<std::optional<EmbeddingVector>> embed_corpus(std::span<const std::string> texts, Embedder& embedder,
                                                         EmbeddingCache* cache = nullptr,
                                                         const EmbedCorpusOptions& options = {});

}  // namespace revrec::embedding
