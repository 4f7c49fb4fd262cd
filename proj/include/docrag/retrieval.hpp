#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "docrag/core.hpp"

namespace docrag {

/// Immutable page collection with doc_id lookup.
class Corpus {
 public:
  Corpus() = default;
  /// Throws DuplicateIdError on a repeated doc_id, InvalidArgument on non-positive dimensions.
  explicit Corpus(std::vector<PageImage> pages);

  const std::vector<PageImage>& pages() const { return pages_; }
  std::size_t size() const { return pages_.size(); }
  bool empty() const { return pages_.empty(); }
  const PageImage* find(std::string_view doc_id) const;
  /// Throws InvalidArgument for unknown ids.
  const PageImage& at(std::string_view doc_id) const;

 private:
  std::vector<PageImage> pages_;
  std::map<std::string, std::size_t, std::less<>> by_id_;
};

/// Reads a line-delimited JSON manifest (doc_id, image_path, width, height,
/// text_proxy). Relative image paths resolve against the manifest directory.
Corpus ingest_corpus(const std::filesystem::path& manifest_path);

std::vector<Query> load_queries(const std::filesystem::path& manifest_path);

/// MurmurHash64A over the bytes of `data`.
std::uint64_t stable_hash64(std::string_view data, std::uint64_t seed = 0);

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dims() const { return values.size(); }
  double norm() const;
};

inline constexpr std::size_t kDefaultDims = 1024;
inline constexpr std::size_t kDefaultK = 5;

/// Sparse bucket counts: (bucket, count) sorted by bucket.
using BucketCounts = std::vector<std::pair<std::uint32_t, std::uint32_t>>;

/// Lowercased whitespace tokens hashed into `dims` buckets. dims must be a power of two >= 8.
BucketCounts bucket_counts(std::string_view text, std::size_t dims);

/// L2-normalized hashed term-frequency vector; zero vector for text without tokens.
EmbeddingVector embed(std::string_view text, std::size_t dims);

class Retriever {
 public:
  virtual ~Retriever() = default;
  /// Top-k candidates; step_index is left at 0 for the caller to set.
  virtual CandidateSet search(std::string_view query, std::size_t k) const = 0;
};

/// Cosine similarity over hashed TF vectors. Ranking compares cosines exactly
/// through integer arithmetic, so mathematically equal scores always fall to
/// the doc_id tie-break.
class HashedTfRetriever final : public Retriever {
 public:
  explicit HashedTfRetriever(const Corpus& corpus, std::size_t dims = kDefaultDims);

  CandidateSet search(std::string_view query, std::size_t k) const override;
  std::size_t dims() const { return dims_; }

 private:
  struct Entry {
    const PageImage* page;
    BucketCounts counts;
    std::uint64_t norm_sq;
  };
  std::size_t dims_;
  std::vector<Entry> index_;
};

}  // namespace docrag
