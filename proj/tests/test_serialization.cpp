#include <doctest.h>

#include <random>

#include "docrag/action_grammar.hpp"
#include "docrag/errors.hpp"
#include "docrag/raster.hpp"
#include "docrag/rewards.hpp"
#include "docrag/serialization.hpp"
#include "docrag/toy_policy.hpp"
#include "test_util.hpp"

using namespace docrag;
using nlohmann::json;
using testutil::page;

namespace {

Raster noise(int w, int h, std::uint32_t seed) {
  std::mt19937 gen(seed);
  Raster r(w, h);
  for (auto& b : r.pixels) b = static_cast<std::uint8_t>(gen());
  return r;
}

// A scored rollout over a page with pixels, so crops carry rasters.
Trajectory pixel_rollout(const std::string& id) {
  auto p = page("img", "a chart of sales", 200, 160);
  p.raster = std::make_shared<const Raster>(noise(200, 160, 3));
  Corpus corpus({p, page("other", "unrelated words")});
  HashedTfRetriever retriever(corpus);
  Query q;
  q.id = "q";
  q.text = "sales chart";
  q.reference_answer = "up";
  q.golden_doc_ids = {"img"};
  q.golden_boxes["img"] = {{0, 0, 100, 80}};
  ScriptedPolicy policy({"<think>s</think><search>sales chart</search>", "<think>p</think><select>0</select>",
                         "<think>z</think><bbox>0,0,100,80</bbox>", "<think>a</think><answer>up</answer>"});
  auto t = run_rollout(policy, q, corpus, retriever, SessionConfig{}, {id, nullptr});
  t.reward = score_trajectory(t, NormalizedMatchJudge{});
  return t;
}

}  // namespace

TEST_CASE("value round trips") {
  CHECK(bbox_from_json(to_json(BBox{1, 2, 3, 4})) == BBox{1, 2, 3, 4});

  Query q;
  q.id = "q1";
  q.text = "t";
  q.reference_answer = "r";
  q.golden_doc_ids = {"d1", "d2"};
  q.golden_boxes["d1"] = {{0, 0, 5, 5}, {1, 1, 9, 9}};
  CHECK(query_from_json(to_json(q)) == q);

  for (const auto* text : {"<search>cats</search>", "<select>0, 2</select>", "<bbox>1,2,30,40</bbox>",
                           "<answer>x</answer>", "<search>a</search><answer>b</answer>", "junk"}) {
    auto a = parse_turn(text).action;
    CHECK(action_from_json(to_json(a)) == a);
  }

  auto r = total_reward({1, 0.5, 1, 0, 1}, RewardWeights{});
  CHECK(reward_from_json(to_json(r)) == r);

  auto p = page("d", "text", 3, 2);
  p.raster = std::make_shared<const Raster>(noise(3, 2, 1));
  CHECK(page_from_json(to_json(p)) == p);
  auto no_pixels = page_from_json(to_json(p, ImageWire::FileUrl));
  CHECK(no_pixels.raster == nullptr);
  CHECK(base64_decode(base64_encode(encode_ppm(*p.raster))) == encode_ppm(*p.raster));
  CHECK_THROWS_AS(base64_decode("@@@@"), SchemaError);
}

TEST_CASE("step result round trip") {
  auto t = pixel_rollout("t");
  StepResult s;
  s.observation = t.turns[6];
  s.errors = parse_turn("<search>a</search><answer>b</answer>").action.errors;
  s.warnings = {"dropped index 9"};
  CHECK(step_result_from_json(to_json(s)) == s);
  StepResult end;
  end.terminated = true;
  end.termination_reason = TerminationReason::Answered;
  CHECK(step_result_from_json(to_json(end)) == end);
}

TEST_CASE("trajectory round trip") {
  auto t = pixel_rollout("traj-1");
  REQUIRE(t.predicted_boxes.size() == 1);
  auto j = to_json(t);
  CHECK(j.at("schema_version") == 1);
  CHECK(trajectory_from_json(j) == t);
  CHECK(trajectory_from_json(json::parse(j.dump())) == t);

  auto world = generate_micro_world(7, 20, 10);
  ToyTrainConfig cfg;
  auto eval = evaluate_toy(world, ToyPolicy::uniform(world, cfg.session.k), 3, 1, cfg);
  for (const auto& traj : eval.trajectories) CHECK(trajectory_from_json(json::parse(to_json(traj).dump())) == traj);

  auto bad = j;
  bad["schema_version"] = 2;
  CHECK_THROWS_AS(trajectory_from_json(bad), SchemaError);
  bad = j;
  bad.erase("turns");
  CHECK_THROWS_AS(trajectory_from_json(bad), SchemaError);
}

TEST_CASE("jsonl helpers") {
  testutil::TempDir dir;
  auto path = dir / "x.jsonl";
  std::vector<json> first{json{{"a", 1}}, json{{"a", 2}}};
  append_jsonl(path, first);
  std::vector<json> second{json{{"a", 3}}};
  append_jsonl(path, second);
  auto all = read_jsonl(path);
  REQUIRE(all.size() == 3);
  CHECK(all[2]["a"] == 3);

  write_jsonl(path, second);
  CHECK(read_jsonl(path).size() == 1);

  testutil::write_text(dir / "bad.jsonl", "{\"a\":1}\n\n{oops\n");
  try {
    read_jsonl(dir / "bad.jsonl");
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(read_jsonl(dir / "missing.jsonl"), IoError);
  // No temporary files are left behind.
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) ++files;
  CHECK(files == 2);
}

TEST_CASE("trajectory store writes crop rasters beside the file") {
  testutil::TempDir dir;
  TrajectoryStore store(dir / "trajs.jsonl");
  std::vector<Trajectory> batch{pixel_rollout("a"), pixel_rollout("b")};
  store.append(batch);
  store.append(std::span<const Trajectory>(batch.data(), 1));
  CHECK(std::filesystem::exists(dir / "a_2.ppm"));
  CHECK(std::filesystem::exists(dir / "b_2.ppm"));

  auto loaded = store.load();
  REQUIRE(loaded.size() == 3);
  const auto& crop = loaded[0].turns[6].images.at(0);
  CHECK(crop.raster == nullptr);
  CHECK(crop.image_path == (dir / "a_2.ppm").string());
  CHECK(read_ppm(crop.image_path) == *batch[0].turns[6].images[0].raster);

  // Apart from in-memory pixels moving to files, the record is unchanged.
  auto expect = batch[0];
  for (std::size_t i = 0; i < expect.turns.size(); ++i) {
    for (std::size_t n = 0; n < expect.turns[i].images.size(); ++n) {
      auto& img = expect.turns[i].images[n];
      if (!img.raster) continue;
      const auto& stored = loaded[0].turns[i].images[n];
      CHECK(read_ppm(stored.image_path) == *img.raster);
      img.raster.reset();
      img.image_path = stored.image_path;
    }
  }
  CHECK(loaded[0] == expect);
  CHECK(loaded[0].reward == batch[0].reward);
}
