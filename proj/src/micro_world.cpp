#include "docrag/micro_world.hpp"

#include <cstdio>
#include <set>

#include "docrag/errors.hpp"
#include "docrag/random.hpp"
#include "docrag/rewards.hpp"

namespace docrag {

namespace {

constexpr std::string_view kConsonants = "bcdfghjklmnprstvz";
constexpr std::string_view kVowels = "aeiou";
constexpr std::size_t kFillerPool = 30;
constexpr std::size_t kFillersPerPage = 8;
constexpr std::size_t kLabelPool = 6;
constexpr std::size_t kTopicWords = 3;

class WordMaker {
 public:
  explicit WordMaker(Rng& rng) : rng_(rng) {}

  std::string fresh(std::size_t syllables, bool with_digits = false) {
    while (true) {
      std::string w;
      for (std::size_t i = 0; i < syllables; ++i) {
        w += kConsonants[rng_.below(kConsonants.size())];
        w += kVowels[rng_.below(kVowels.size())];
      }
      if (with_digits) w += std::to_string(10 + rng_.below(90));
      if (used_.insert(w).second) return w;
    }
  }

 private:
  Rng& rng_;
  std::set<std::string> used_;
};

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::string numbered(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%03zu", prefix, i);
  return buf;
}

}  // namespace

MicroWorld generate_micro_world(std::uint64_t seed, std::size_t n_docs, std::size_t n_queries) {
  if (n_docs < 5) throw InvalidArgument("micro-world needs at least 5 documents");
  if (n_queries < 1 || n_queries > n_docs) throw InvalidArgument("n_queries must be in [1, n_docs]");

  Rng rng(seed);
  WordMaker words(rng);
  MicroWorld world;
  world.seed = seed;

  std::vector<std::string> fillers;
  for (std::size_t i = 0; i < kFillerPool; ++i) fillers.push_back(words.fresh(2));
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < kLabelPool; ++i) labels.push_back(words.fresh(3));

  std::vector<PageImage> pages;
  std::vector<std::vector<std::string>> topics;
  for (std::size_t d = 0; d < n_docs; ++d) {
    PageImage page;
    page.doc_id = numbered("doc", d);
    page.width = kMicroPageWidth;
    page.height = kMicroPageHeight;

    std::vector<std::string> topic;
    for (std::size_t t = 0; t < kTopicWords; ++t) topic.push_back(words.fresh(3));

    int header = 150 + static_cast<int>(rng.below(101));
    int footer = 1150 + static_cast<int>(rng.below(101));
    int split = 400 + static_cast<int>(rng.below(201));
    std::vector<BBox> boxes{{0, 0, kMicroPageWidth, header},
                            {0, header, split, footer},
                            {split, header, kMicroPageWidth, footer},
                            {0, footer, kMicroPageWidth, kMicroPageHeight}};
    auto page_labels = labels;
    rng.shuffle(page_labels);
    std::vector<Region> regions;
    for (std::size_t r = 0; r < kMicroRegionsPerPage; ++r) {
      regions.push_back({boxes[r], page_labels[r], words.fresh(3, true)});
    }

    std::vector<std::string> text = topic;
    auto pool = fillers;
    rng.shuffle(pool);
    text.insert(text.end(), pool.begin(), pool.begin() + kFillersPerPage);
    for (const auto& reg : regions) {
      text.push_back(reg.label);
      text.push_back(reg.value);
    }
    page.text_proxy = join(text);

    world.layout[page.doc_id] = std::move(regions);
    world.legible[page.doc_id] = rng.below(2) == 0;
    topics.push_back(std::move(topic));
    pages.push_back(std::move(page));
  }

  std::vector<std::size_t> order(n_docs);
  for (std::size_t i = 0; i < n_docs; ++i) order[i] = i;
  rng.shuffle(order);

  for (std::size_t qi = 0; qi < n_queries; ++qi) {
    std::size_t g = order[qi];
    const auto& doc_id = pages[g].doc_id;
    const auto& regions = world.layout[doc_id];

    MicroTask task;
    task.golden_region = rng.below(kMicroRegionsPerPage);
    task.asked_label = regions[task.golden_region].label;
    task.needs_crop = qi % 2 == 1;
    world.legible[doc_id] = !task.needs_crop;

    std::vector<std::string> vague{topics[g][rng.below(kTopicWords)]};
    for (int f = 0; f < 3; ++f) vague.push_back(fillers[rng.below(fillers.size())]);
    std::size_t other = (g + 1 + rng.below(n_docs - 1)) % n_docs;
    task.search_templates = {join(topics[g]), join(vague), join(topics[other])};

    Query q;
    q.id = numbered("q", qi);
    q.text = "what is the " + task.asked_label + " on the page about " + join(topics[g]);
    q.reference_answer = regions[task.golden_region].value;
    q.golden_doc_ids = {doc_id};
    if (task.needs_crop) q.golden_boxes[doc_id] = {regions[task.golden_region].box};

    world.queries.push_back(std::move(q));
    world.tasks.push_back(std::move(task));
  }
  world.corpus = Corpus(std::move(pages));
  return world;
}

std::string read_evidence(const MicroWorld& world, std::size_t query_index, const std::string& doc_id,
                          const std::optional<BBox>& crop) {
  static const std::string kUnknown = "unknown";
  auto it = world.layout.find(doc_id);
  if (it == world.layout.end() || query_index >= world.tasks.size()) return kUnknown;
  const auto& asked = world.tasks[query_index].asked_label;
  if (crop) {
    const Region* best = nullptr;
    double best_iou = 0.5;
    for (const auto& r : it->second) {
      double v = iou(r.box, *crop);
      if (v >= best_iou) {
        best_iou = v;
        best = &r;
      }
    }
    return (best && best->label == asked) ? best->value : kUnknown;
  }
  auto leg = world.legible.find(doc_id);
  if (leg == world.legible.end() || !leg->second) return kUnknown;
  for (const auto& r : it->second) {
    if (r.label == asked) return r.value;
  }
  return kUnknown;
}

std::vector<BBox> MicroLayoutProvider::propose(const PageImage& image) const {
  std::vector<BBox> out;
  if (auto it = world_.layout.find(image.doc_id); it != world_.layout.end()) {
    for (const auto& r : it->second) out.push_back(r.box);
  }
  return out;
}

}  // namespace docrag
