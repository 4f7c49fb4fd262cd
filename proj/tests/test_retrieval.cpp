#include <doctest.h>

#include <random>

#include "docrag/errors.hpp"
#include "docrag/retrieval.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace docrag;
using testutil::page;

TEST_CASE("ingest manifests") {
  testutil::TempDir dir;
  testutil::write_text(dir / "ok.jsonl",
                       R"({"doc_id":"d1","image_path":"img/d1.ppm","width":10,"height":20,"text_proxy":"alpha"}
{"doc_id":"d2","image_path":"","width":10,"height":20,"text_proxy":"beta"}

{"doc_id":"d3","image_path":"/abs/d3.ppm","width":5,"height":5,"text_proxy":""}
)");
  auto c = ingest_corpus(dir / "ok.jsonl");
  CHECK(c.size() == 3);
  CHECK(c.at("d1").image_path == (dir.path() / "img/d1.ppm").string());
  CHECK(c.at("d2").image_path.empty());
  CHECK(c.at("d3").image_path == "/abs/d3.ppm");
  CHECK(c.find("zz") == nullptr);
  CHECK_THROWS_AS(c.at("zz"), InvalidArgument);

  testutil::write_text(dir / "dup.jsonl",
                       R"({"doc_id":"d1","image_path":"","width":1,"height":1,"text_proxy":""}
{"doc_id":"d1","image_path":"","width":1,"height":1,"text_proxy":""}
)");
  try {
    ingest_corpus(dir / "dup.jsonl");
    FAIL("expected DuplicateIdError");
  } catch (const DuplicateIdError& e) {
    CHECK(e.id() == "d1");
  }

  testutil::write_text(dir / "empty.jsonl", "");
  CHECK(ingest_corpus(dir / "empty.jsonl").empty());

  testutil::write_text(dir / "bad.jsonl",
                       R"({"doc_id":"d1","image_path":"","width":1,"height":1,"text_proxy":""}
{"doc_id":"d2","width":1,"height":1,"text_proxy":""}
)");
  try {
    ingest_corpus(dir / "bad.jsonl");
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(e.line() == 2);
  }
  testutil::write_text(dir / "neg.jsonl", R"({"doc_id":"d1","image_path":"","width":0,"height":1,"text_proxy":""})");
  CHECK_THROWS_AS(ingest_corpus(dir / "neg.jsonl"), SchemaError);
  testutil::write_text(dir / "junk.jsonl", "{not json\n");
  CHECK_THROWS_AS(ingest_corpus(dir / "junk.jsonl"), SchemaError);
  CHECK_THROWS_AS(ingest_corpus(dir / "missing.jsonl"), IoError);
}

TEST_CASE("load queries") {
  testutil::TempDir dir;
  testutil::write_text(dir / "q.jsonl",
                       R"({"id":"q1","text":"what","reference_answer":"x","golden_doc_ids":["d1"],"golden_boxes":{"d1":[[0,0,5,5]]}}
)");
  auto qs = load_queries(dir / "q.jsonl");
  REQUIRE(qs.size() == 1);
  CHECK(qs[0].golden_boxes.at("d1") == std::vector<BBox>{{0, 0, 5, 5}});
  testutil::write_text(dir / "bad.jsonl",
                       R"({"id":"q1","text":"what","reference_answer":"x","golden_doc_ids":[],"golden_boxes":{"d1":[[0,0,5,5]]}}
)");
  CHECK_THROWS_AS(load_queries(dir / "bad.jsonl"), SchemaError);
}

TEST_CASE("murmur hash reference values") {
  // MurmurHash64A, seed 0.
  CHECK(stable_hash64("") == 0ULL);
  CHECK(stable_hash64("a") != stable_hash64("b"));
  CHECK(stable_hash64("hello world") == stable_hash64("hello world"));
  CHECK(stable_hash64("abc", 1) != stable_hash64("abc", 0));
}

TEST_CASE("embedding examples") {
  auto v = embed("a a", 8);
  int nonzero = 0;
  for (double x : v.values) {
    if (x != 0.0) {
      ++nonzero;
      CHECK(x == 1.0);
    }
  }
  CHECK(nonzero == 1);
  auto z = embed("", 8);
  CHECK(z.dims() == 8);
  CHECK(z.norm() == 0.0);
  CHECK(embed("Some Text here", 64).values == embed("some text HERE", 64).values);
  CHECK(embed("x y z", 1024).norm() == doctest::Approx(1.0));
  CHECK_THROWS_AS(embed("x", 12), InvalidArgument);
  CHECK_THROWS_AS(embed("x", 4), InvalidArgument);
}

TEST_CASE("search examples") {
  Corpus c({page("d1", "cats"), page("d2", "dogs")});
  HashedTfRetriever r(c);
  auto one = r.search("cats", 1);
  REQUIRE(one.size() == 1);
  CHECK(one.entries[0].doc_id == "d1");
  CHECK(one.entries[0].score > 0.0);

  Corpus c3({page("b", "x"), page("c", "y"), page("a", "z")});
  HashedTfRetriever r3(c3);
  auto none = r3.search("nothing matches", 3);
  REQUIRE(none.size() == 3);
  CHECK(none.entries[0].doc_id == "a");
  CHECK(none.entries[1].doc_id == "b");
  CHECK(none.entries[2].doc_id == "c");
  for (const auto& e : none.entries) CHECK(e.score == 0.0);

  CHECK(r3.search("x", 10).size() == 3);
  CHECK(HashedTfRetriever(Corpus{}).search("x", 5).empty());
  CHECK_THROWS_AS(r3.search("x", 0), InvalidArgument);
}

TEST_CASE("search matches a brute-force scan") {
  std::mt19937 gen(23);
  std::vector<std::string> vocab;
  for (int i = 0; i < 40; ++i) vocab.push_back("w" + std::to_string(i));
  for (int round = 0; round < 20; ++round) {
    std::size_t n = 1 + gen() % 200;
    std::vector<PageImage> pages;
    for (std::size_t i = 0; i < n; ++i) {
      std::string text;
      for (std::size_t t = gen() % 12; t > 0; --t) text += vocab[gen() % vocab.size()] + " ";
      pages.push_back(page("p" + std::to_string(i), text));
    }
    Corpus corpus(std::move(pages));
    std::size_t dims = (round % 2) ? 16 : 1024;  // small dims force bucket collisions
    HashedTfRetriever r(corpus, dims);
    for (int qn = 0; qn < 5; ++qn) {
      std::string q;
      for (std::size_t t = 1 + gen() % 4; t > 0; --t) q += vocab[gen() % vocab.size()] + " ";
      std::size_t k = 1 + gen() % 10;
      auto got = r.search(q, k);
      auto want = oracle::search(corpus, q, k, dims);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < want.size(); ++i) {
        CHECK(got.entries[i].doc_id == want[i].first);
        CHECK(got.entries[i].score == doctest::Approx(want[i].second).epsilon(1e-12));
      }
      // Repeating the query scales TF but leaves the cosine ranking alone.
      auto doubled = r.search(q + " " + q, k);
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(doubled.entries[i].doc_id == got.entries[i].doc_id);
      CHECK(r.search(q, k) == got);
    }
  }
}
