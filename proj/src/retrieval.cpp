#include "docrag/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "docrag/errors.hpp"
#include "docrag/serialization.hpp"

namespace docrag {

using nlohmann::json;

Corpus::Corpus(std::vector<PageImage> pages) : pages_(std::move(pages)) {
  for (std::size_t i = 0; i < pages_.size(); ++i) {
    const auto& p = pages_[i];
    if (p.doc_id.empty()) throw InvalidArgument("empty doc_id");
    if (p.width <= 0 || p.height <= 0) throw InvalidArgument("page " + p.doc_id + " has non-positive size");
    if (!by_id_.emplace(p.doc_id, i).second) throw DuplicateIdError(p.doc_id);
  }
}

const PageImage* Corpus::find(std::string_view doc_id) const {
  auto it = by_id_.find(doc_id);
  return it == by_id_.end() ? nullptr : &pages_[it->second];
}

const PageImage& Corpus::at(std::string_view doc_id) const {
  if (const auto* p = find(doc_id)) return *p;
  throw InvalidArgument("unknown doc_id: " + std::string(doc_id));
}

namespace {

template <typename Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw SchemaError(std::string("invalid JSON: ") + e.what(), lineno);
    }
    if (!record.is_object()) throw SchemaError("record must be an object", lineno);
    try {
      fn(record, lineno);
    } catch (const json::exception& e) {
      throw SchemaError(e.what(), lineno);
    } catch (const SchemaError&) {
      throw;
    } catch (const InvalidArgument& e) {
      throw SchemaError(e.what(), lineno);
    }
  }
  if (in.bad()) throw IoError("read failure on " + path.string());
}

}  // namespace

Corpus ingest_corpus(const std::filesystem::path& manifest_path) {
  std::vector<PageImage> pages;
  std::map<std::string, std::size_t> seen;
  auto base = manifest_path.parent_path();
  for_each_record(manifest_path, [&](const json& r, std::size_t lineno) {
    for (const char* key : {"doc_id", "image_path", "width", "height", "text_proxy"}) {
      if (!r.contains(key)) throw SchemaError(std::string("missing field ") + key, lineno);
    }
    PageImage p;
    p.doc_id = r.at("doc_id").get<std::string>();
    p.image_path = r.at("image_path").get<std::string>();
    p.width = r.at("width").get<int>();
    p.height = r.at("height").get<int>();
    p.text_proxy = r.at("text_proxy").get<std::string>();
    if (p.doc_id.empty()) throw SchemaError("doc_id must be nonempty", lineno);
    if (p.width <= 0 || p.height <= 0) throw SchemaError("width and height must be positive", lineno);
    if (!p.image_path.empty() && std::filesystem::path(p.image_path).is_relative()) {
      p.image_path = (base / p.image_path).string();
    }
    if (!seen.emplace(p.doc_id, lineno).second) throw DuplicateIdError(p.doc_id);
    pages.push_back(std::move(p));
  });
  return Corpus(std::move(pages));
}

std::vector<Query> load_queries(const std::filesystem::path& manifest_path) {
  std::vector<Query> out;
  for_each_record(manifest_path, [&](const json& r, std::size_t) {
    Query q = query_from_json(r);
    q.validate();
    out.push_back(std::move(q));
  });
  return out;
}

std::uint64_t stable_hash64(std::string_view data, std::uint64_t seed) {
  constexpr std::uint64_t m = 0xc6a4a7935bd1e995ULL;
  constexpr int r = 47;
  std::uint64_t h = seed ^ (data.size() * m);
  const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());
  std::size_t n_blocks = data.size() / 8;
  for (std::size_t i = 0; i < n_blocks; ++i) {
    std::uint64_t k = 0;
    for (int b = 7; b >= 0; --b) k = (k << 8) | bytes[i * 8 + static_cast<std::size_t>(b)];
    k *= m;
    k ^= k >> r;
    k *= m;
    h ^= k;
    h *= m;
  }
  const unsigned char* tail = bytes + n_blocks * 8;
  switch (data.size() & 7) {
    case 7: h ^= std::uint64_t(tail[6]) << 48; [[fallthrough]];
    case 6: h ^= std::uint64_t(tail[5]) << 40; [[fallthrough]];
    case 5: h ^= std::uint64_t(tail[4]) << 32; [[fallthrough]];
    case 4: h ^= std::uint64_t(tail[3]) << 24; [[fallthrough]];
    case 3: h ^= std::uint64_t(tail[2]) << 16; [[fallthrough]];
    case 2: h ^= std::uint64_t(tail[1]) << 8; [[fallthrough]];
    case 1:
      h ^= std::uint64_t(tail[0]);
      h *= m;
  }
  h ^= h >> r;
  h *= m;
  h ^= h >> r;
  return h;
}

double EmbeddingVector::norm() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s);
}

BucketCounts bucket_counts(std::string_view text, std::size_t dims) {
  if (dims < 8 || (dims & (dims - 1)) != 0) throw InvalidArgument("dims must be a power of two >= 8");
  std::map<std::uint32_t, std::uint32_t> counts;
  for (auto tok : split_whitespace(text)) {
    for (auto& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    ++counts[static_cast<std::uint32_t>(stable_hash64(tok) & (dims - 1))];
  }
  return BucketCounts(counts.begin(), counts.end());
}

EmbeddingVector embed(std::string_view text, std::size_t dims) {
  auto counts = bucket_counts(text, dims);
  EmbeddingVector v;
  v.values.assign(dims, 0.0);
  double norm_sq = 0.0;
  for (auto [bucket, count] : counts) norm_sq += static_cast<double>(count) * count;
  if (norm_sq == 0.0) return v;
  double inv = 1.0 / std::sqrt(norm_sq);
  for (auto [bucket, count] : counts) v.values[bucket] = count * inv;
  return v;
}

namespace {

std::uint64_t sparse_dot(const BucketCounts& a, const BucketCounts& b) {
  std::uint64_t dot = 0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].first < b[j].first) {
      ++i;
    } else if (b[j].first < a[i].first) {
      ++j;
    } else {
      dot += static_cast<std::uint64_t>(a[i].second) * b[j].second;
      ++i;
      ++j;
    }
  }
  return dot;
}

std::uint64_t norm_sq(const BucketCounts& c) {
  std::uint64_t s = 0;
  for (auto [bucket, count] : c) s += static_cast<std::uint64_t>(count) * count;
  return s;
}

}  // namespace

HashedTfRetriever::HashedTfRetriever(const Corpus& corpus, std::size_t dims) : dims_(dims) {
  index_.reserve(corpus.size());
  for (const auto& page : corpus.pages()) {
    auto counts = bucket_counts(page.text_proxy, dims);
    auto n = norm_sq(counts);
    index_.push_back({&page, std::move(counts), n});
  }
}

CandidateSet HashedTfRetriever::search(std::string_view query, std::size_t k) const {
  if (k == 0) throw InvalidArgument("k must be >= 1");
  CandidateSet out;
  out.k = k;
  if (index_.empty()) return out;

  auto q = bucket_counts(query, dims_);
  auto q_norm_sq = norm_sq(q);
  struct Scored {
    const Entry* entry;
    std::uint64_t dot;
  };
  std::vector<Scored> scored;
  scored.reserve(index_.size());
  for (const auto& e : index_) scored.push_back({&e, q_norm_sq ? sparse_dot(q, e.counts) : 0});

  // cos(a) > cos(b)  <=>  dot_a^2 * |b|^2 > dot_b^2 * |a|^2  (query norm cancels).
  using u128 = unsigned __int128;
  auto before = [](const Scored& a, const Scored& b) {
    u128 lhs = static_cast<u128>(a.dot) * a.dot * (b.entry->norm_sq ? b.entry->norm_sq : 1);
    u128 rhs = static_cast<u128>(b.dot) * b.dot * (a.entry->norm_sq ? a.entry->norm_sq : 1);
    if (lhs != rhs) return lhs > rhs;
    return a.entry->page->doc_id < b.entry->page->doc_id;
  };
  std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(), before);

  for (std::size_t i = 0; i < take; ++i) {
    const auto& s = scored[i];
    double score = 0.0;
    if (s.dot && s.entry->norm_sq) {
      score = static_cast<double>(s.dot) /
              (std::sqrt(static_cast<double>(q_norm_sq)) * std::sqrt(static_cast<double>(s.entry->norm_sq)));
    }
    out.entries.push_back({s.entry->page->doc_id, score});
  }
  return out;
}

}  // namespace docrag
