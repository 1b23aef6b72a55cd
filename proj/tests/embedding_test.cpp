#include "revrec/embedding.hpp"
#include "revrec/textprep.hpp"

#include "test_support.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <set>

namespace revrec::embedding {
namespace {

using test::TempDir;

/// Hash backend that counts how often it is asked for vectors.
class CountingEmbedder final : public Embedder {
 public:
  std::string backend_id() const override { return inner_.backend_id(); }
  std::size_t dim() const override { return inner_.dim(); }
  std::vector<std::vector<float>> embed_batch(std::span<const std::string> texts) override {
    ++calls;
    texts_seen += texts.size();
    return inner_.embed_batch(texts);
  }

  std::size_t calls = 0;
  std::size_t texts_seen = 0;

 private:
  HashEmbedder inner_{256, 42};
};

double norm(std::span<const float> v) {
  double s = 0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

TEST(Sha256, KnownDigest) {
  EXPECT_EQ(to_hex(sha256("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Embed, DeterministicAndUnitNorm) {
  HashEmbedder embedder;
  const auto a = embed("crash on sync", embedder);
  const auto b = embed("crash on sync", embedder);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.dim(), 256u);
  EXPECT_NEAR(norm(a.values), 1.0, 1e-5);
  EXPECT_TRUE(is_unit_norm(a.values));
  EXPECT_EQ(a.source_hash, sha256("crash on sync"));
}

TEST(Embed, EmptyTextFails) {
  HashEmbedder embedder;
  for (const char* text : {"", "  123 !!"}) {
    try {
      embed(text, embedder);
      FAIL() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kEmptyTextEmbedding);
    }
  }
}

TEST(Embed, CleansBeforeEmbedding) {
  HashEmbedder embedder;
  EXPECT_EQ(embed("Crash on SYNC!!!", embedder).values, embed("crash on sync", embedder).values);
}

TEST(Cosine, Examples) {
  const std::vector<float> x{1, 0};
  const std::vector<float> y{0, 1};
  EXPECT_DOUBLE_EQ(cosine(x, x), 1.0);
  EXPECT_DOUBLE_EQ(cosine(x, y), 0.0);
  EXPECT_NEAR(cosine(std::vector<float>{1, 2, 3}, std::vector<float>{4, 5, 6}), 32.0 / std::sqrt(14.0 * 77.0), 1e-12);
  EXPECT_NEAR(cosine(std::vector<float>{1, 2, 3}, std::vector<float>{4, 5, 6}), 0.9746, 1e-4);
}

TEST(Cosine, Errors) {
  const std::vector<float> a{1, 0};
  const std::vector<float> b{1, 0, 0};
  const std::vector<float> zero{0, 0};
  try {
    cosine(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
  try {
    cosine(a, zero);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kZeroVector);
  }
}

TEST(Dot, LaneOrderIsFixed) {
  std::vector<float> a(37);
  std::vector<float> b(37);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = static_cast<float>(std::sin(i * 1.3) * 1e3);
    b[i] = static_cast<float>(std::cos(i * 0.7) * 1e-3);
  }
  double lanes[8] = {};
  for (std::size_t i = 0; i < a.size(); ++i) lanes[i % 8] += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  const double expected = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
  EXPECT_EQ(dot(a, b), expected);
}

TEST(HashEmbed, IdenticalTokensIdenticalVectors) {
  const std::vector<std::string> t{"crash", "sync"};
  EXPECT_EQ(hash_embed(t, 256), hash_embed(t, 256));
  EXPECT_NE(hash_embed(t, 256, 1).values, hash_embed(t, 256, 2).values);
}

TEST(HashEmbed, RepeatedTokenSameDirection) {
  const std::vector<std::string> one{"a"};
  const std::vector<std::string> two{"a", "a"};
  EXPECT_NEAR(cosine(hash_embed(one, 256), hash_embed(two, 256)), 1.0, 1e-12);
}

TEST(HashEmbed, DisjointVocabulariesAreNearlyOrthogonal) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> pick(0, 99999);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<std::string> a;
    std::vector<std::string> b;
    std::set<int> used;
    while (used.size() < 40) used.insert(pick(rng));
    int k = 0;
    for (int w : used) (k++ % 2 ? a : b).push_back("w" + std::to_string(w));
    worst = std::max(worst, std::abs(cosine(hash_embed(a, 256), hash_embed(b, 256))));
  }
  EXPECT_LT(worst, 0.3);
}

TEST(HashEmbed, MatchesReferenceSimilarities) {
  // Reference values from the independent Python implementation.
  HashEmbedder e;
  const auto t = embed("cannot sync with qr code", e);
  EXPECT_NEAR(cosine(t, embed("cannot sync with qr code ever", e)), 0.912870906654728, 1e-6);
  EXPECT_NEAR(cosine(t, embed("great app love it five stars plus more words", e)), 0.07453559904407792, 1e-6);
  EXPECT_NEAR(cosine(embed("browser crashes when opening a new private tab from the home screen shortcut menu", e),
                     embed("browser crashes when opening a new private tab from the home screen shortcut button", e)),
              0.928571398112402, 1e-6);
}

TEST(EmbedCorpus, PreservesOrder) {
  HashEmbedder e;
  const std::vector<std::string> texts{"crash on sync", "video freeze", "login loop"};
  const auto out = embed_corpus(texts, e);
  ASSERT_EQ(out.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(out[i]->values, embed(texts[i], e).values);
}

TEST(EmbedCorpus, RepeatedTextHitsBackendOnce) {
  CountingEmbedder e;
  EmbeddingCache cache;
  const std::vector<std::string> texts(100, "crash on sync");
  const auto out = embed_corpus(texts, e, &cache);
  EXPECT_EQ(e.calls, 1u);
  EXPECT_EQ(e.texts_seen, 1u);
  EXPECT_EQ(out.size(), 100u);
  embed_corpus(texts, e, &cache);
  EXPECT_EQ(e.calls, 1u);
}

TEST(EmbedCorpus, BatchesAreBounded) {
  CountingEmbedder e;
  std::vector<std::string> texts;
  for (int i = 0; i < 130; ++i) {
    texts.push_back(std::string("text ") + static_cast<char>('a' + i % 26) + "q" + static_cast<char>('a' + i / 26));
  }
  embed_corpus(texts, e);
  EXPECT_EQ(e.calls, 3u);
}

TEST(EmbedCorpus, StrictModeNamesEmptyIndex) {
  HashEmbedder e;
  const std::vector<std::string> texts{"crash", "fine text", "!!! 42", "more"};
  try {
    embed_corpus(texts, e);
    FAIL();
  } catch (const IndexedError& err) {
    EXPECT_EQ(err.index(), 2u);
    EXPECT_EQ(err.code(), ErrorCode::kEmptyTextEmbedding);
    EXPECT_NE(std::string(err.what()).find("#2"), std::string::npos);
  }
  EmbedCorpusOptions lenient;
  lenient.strict = false;
  const auto out = embed_corpus(texts, e, nullptr, lenient);
  EXPECT_TRUE(out[0] && out[1] && out[3]);
  EXPECT_FALSE(out[2]);
}

TEST(EmbeddingCache, PersistsAndReloads) {
  TempDir dir;
  const auto path = dir / "cache.bin";
  HashEmbedder e;
  const std::vector<std::string> texts{"crash on sync", "video freeze"};
  std::vector<std::optional<EmbeddingVector>> first;
  {
    EmbeddingCache cache(path);
    first = embed_corpus(texts, e, &cache);
    EXPECT_EQ(cache.size(), 2u);
  }
  EXPECT_EQ(std::filesystem::file_size(path), 2u * (32 + 4 + 256 * 4));
  EmbeddingCache reloaded(path);
  EXPECT_EQ(reloaded.size(), 2u);
  CountingEmbedder counting;
  const auto second = embed_corpus(texts, counting, &reloaded);
  EXPECT_EQ(counting.calls, 0u);
  EXPECT_EQ(first, second);
}

TEST(EmbeddingCache, TruncatedTailIsDropped) {
  TempDir dir;
  const auto path = dir / "cache.bin";
  HashEmbedder e;
  {
    EmbeddingCache cache(path);
    const std::vector<std::string> texts{"crash on sync", "video freeze"};
    embed_corpus(texts, e, &cache);
  }
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 100);
  EmbeddingCache reloaded(path);
  EXPECT_EQ(reloaded.size(), 1u);
  EXPECT_GT(reloaded.truncated_bytes(), 0u);
}

TEST(EmbeddingCache, NonUnitRecordIsCorrupt) {
  TempDir dir;
  const auto path = dir / "cache.bin";
  std::string record(32, '\x01');
  const std::uint32_t dim = 2;
  record.append(reinterpret_cast<const char*>(&dim), 4);
  const float v[2] = {3.0f, 4.0f};
  record.append(reinterpret_cast<const char*>(v), 8);
  test::write_file(path, record);
  try {
    EmbeddingCache cache(path);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::kIo);
  }
}

TEST(EmbedderConfig, Validation) {
  EmbedderConfig c;
  EXPECT_NO_THROW(c.validate());
  c.dim = 4;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.backend = Backend::kSidecar;
  EXPECT_THROW(c.validate(), Error);
}

// ---------------------------------------------------------------- properties

std::vector<float> random_vector(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<float> d(0, 1);
  std::vector<float> v(dim);
  for (auto& x : v) x = d(rng);
  return v;
}

TEST(EmbeddingProperty, CosineSymmetricAndScaleInvariant) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<float> scale(0.01f, 100.0f);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_vector(rng, 64);
    const auto b = random_vector(rng, 64);
    ASSERT_EQ(cosine(a, b), cosine(b, a));
    auto scaled = b;
    const float c = scale(rng);
    for (auto& x : scaled) x *= c;
    ASSERT_NEAR(cosine(a, scaled), cosine(a, b), 1e-6);
    const double s = cosine(a, b);
    ASSERT_TRUE(s >= -1.0 && s <= 1.0);
  }
}

TEST(EmbeddingProperty, CacheDoesNotChangeVectors) {
  std::mt19937_64 rng(13);
  std::vector<std::string> texts;
  for (int i = 0; i < 300; ++i) texts.push_back(test::random_sentence(rng, 1 + i % 15));
  HashEmbedder e;
  EmbeddingCache cache;
  const auto plain = embed_corpus(texts, e);
  const auto cold = embed_corpus(texts, e, &cache);
  const auto warm = embed_corpus(texts, e, &cache);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    ASSERT_EQ(0, std::memcmp(plain[i]->values.data(), cold[i]->values.data(), 256 * sizeof(float)));
    ASSERT_EQ(0, std::memcmp(plain[i]->values.data(), warm[i]->values.data(), 256 * sizeof(float)));
    ASSERT_TRUE(is_unit_norm(plain[i]->values));
  }
}

}  // namespace
}  // namespace revrec::embedding
