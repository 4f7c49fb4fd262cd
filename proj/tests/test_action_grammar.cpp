#include <doctest.h>

#include <random>

#include "docrag/action_grammar.hpp"
#include "docrag/errors.hpp"

using namespace docrag;

namespace {

bool has_code(const ActionRecord& a, FormatErrorCode code) {
  for (const auto& e : a.errors) {
    if (e.code == code) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("parse examples") {
  auto p = parse_turn("<think>need docs</think><search>loss curve 150k</search>");
  CHECK(p.action.kind == ActionKind::Search);
  CHECK(p.action.query == "loss curve 150k");
  CHECK(p.thought == "need docs");
  CHECK(p.action.errors.empty());

  auto s = parse_turn("<select>2</select>");
  CHECK(s.action.kind == ActionKind::Select);
  CHECK(s.action.indices == std::vector<std::size_t>{2});
  CHECK_FALSE(s.thought.has_value());

  auto c = parse_turn("<bbox>10,20,110,220</bbox>");
  REQUIRE(c.action.kind == ActionKind::Crop);
  CHECK(*c.action.boxes == std::vector<BBox>{{10, 20, 110, 220}});

  auto m = parse_turn("<search>a</search><answer>b</answer>");
  CHECK(m.action.kind == ActionKind::Malformed);
  CHECK(has_code(m.action, FormatErrorCode::MultipleActions));
}

TEST_CASE("payload rules") {
  CHECK(parse_turn("<select> 0 , 3 </select>").action.indices == std::vector<std::size_t>{0, 3});
  CHECK(parse_turn("<answer>  Paris </answer>").action.answer_text == "Paris");
  auto multi = parse_turn("<bbox>0,0,5,5; 1,1,9,9</bbox>");
  REQUIRE(multi.action.kind == ActionKind::Crop);
  CHECK(multi.action.boxes->size() == 2);
  CHECK(parse_turn("<bbox>-5,-5,50,50</bbox>").action.kind == ActionKind::Crop);

  for (const char* bad : {"<select>-1</select>", "<select>1.5</select>", "<select></select>", "<select>1,,2</select>",
                          "<bbox>1,2,3</bbox>", "<bbox>0,0,5.5,5</bbox>", "<bbox>5,0,5,5</bbox>",
                          "<bbox>0,9,5,5</bbox>", "<search>   </search>", "<answer></answer>",
                          "<select>99999999999999999999</select>"}) {
    auto p = parse_turn(bad);
    CAPTURE(bad);
    CHECK(p.action.kind == ActionKind::Malformed);
    CHECK(has_code(p.action, FormatErrorCode::BadPayload));
  }
}

TEST_CASE("structural errors") {
  CHECK(has_code(parse_turn("just text").action, FormatErrorCode::MissingAction));
  CHECK(has_code(parse_turn("<think>only thinking</think>").action, FormatErrorCode::MissingAction));
  CHECK(has_code(parse_turn("<search>abc").action, FormatErrorCode::UnclosedTag));
  CHECK(has_code(parse_turn("abc</search>").action, FormatErrorCode::UnclosedTag));
  CHECK(has_code(parse_turn("<Search>x</Search>").action, FormatErrorCode::UnknownTag));
  CHECK(has_code(parse_turn("<tool>x</tool><answer>y</answer>").action, FormatErrorCode::UnknownTag));
  CHECK(has_code(parse_turn("<answer>y</answer><think>late</think>").action, FormatErrorCode::UnknownTag));
  CHECK(has_code(parse_turn("<search><answer>x</answer></search>").action, FormatErrorCode::MultipleActions));
}

TEST_CASE("free text outside tags is ignored") {
  auto p = parse_turn("Sure. <think>t</think> then <answer>42</answer> done");
  CHECK(p.action.kind == ActionKind::Answer);
  CHECK(p.action.answer_text == "42");
  CHECK(parse_turn("a < b and c > d <answer>x</answer>").action.kind == ActionKind::Answer);
}

TEST_CASE("every pair of action tags is MultipleActions") {
  const std::vector<std::string> actions{"<search>q</search>", "<select>0</select>", "<bbox>0,0,5,5</bbox>",
                                         "<answer>a</answer>"};
  for (const auto& a : actions) {
    for (const auto& b : actions) {
      for (const auto& sep : {"", " ", "<think>x</think>"}) {
        auto p = parse_turn(a + sep + b);
        CAPTURE(a + sep + b);
        CHECK(p.action.kind == ActionKind::Malformed);
        CHECK(has_code(p.action, FormatErrorCode::MultipleActions));
      }
    }
  }
}

TEST_CASE("error spans stay inside the input") {
  std::mt19937 gen(5);
  const std::vector<std::string> pieces{"<think>", "</think>", "<search>", "</search>", "<select>", "</select>",
                                        "<bbox>",  "</bbox>",  "<answer>", "</answer>", "<x>",       "1,2",
                                        "abc",     " ",        "<",        ">",         ";",         "</"};
  for (int i = 0; i < 3000; ++i) {
    std::string s;
    for (std::size_t n = gen() % 8; n > 0; --n) s += pieces[gen() % pieces.size()];
    auto p = parse_turn(s);
    bool malformed = p.action.kind == ActionKind::Malformed;
    CHECK(malformed == !p.action.errors.empty());
    for (const auto& e : p.action.errors) {
      CHECK(e.begin <= e.end);
      CHECK(e.end <= s.size());
    }
  }
}

TEST_CASE("serialize canonical forms") {
  CHECK(serialize_action(ActionRecord::select({0, 3})) == "<select>0,3</select>");
  CHECK(serialize_action(ActionRecord::answer("42")) == "<answer>42</answer>");
  CHECK(serialize_action(ActionRecord::crop({{0, 0, 5, 5}})) == "<bbox>0,0,5,5</bbox>");
  CHECK(serialize_turn("why", ActionRecord::search("q")) == "<think>why</think><search>q</search>");

  CHECK_THROWS_AS(serialize_action(ActionRecord{}), InvalidArgument);
  CHECK_THROWS_AS(serialize_action(ActionRecord::search(" padded")), InvalidArgument);
  CHECK_THROWS_AS(serialize_action(ActionRecord::answer("<answer>")), InvalidArgument);
  CHECK_THROWS_AS(serialize_action(ActionRecord::select({})), InvalidArgument);
  CHECK_THROWS_AS(serialize_action(ActionRecord::crop({{5, 5, 5, 9}})), InvalidArgument);
}

TEST_CASE("round trip of serialized actions") {
  std::mt19937 gen(17);
  auto word = [&] {
    std::string w;
    for (std::size_t n = 1 + gen() % 6; n > 0; --n) w += static_cast<char>('a' + gen() % 26);
    return w;
  };
  for (int i = 0; i < 500; ++i) {
    ActionRecord a;
    switch (gen() % 4) {
      case 0: a = ActionRecord::search(word() + " " + word()); break;
      case 1: a = ActionRecord::select({gen() % 20, gen() % 20}); break;
      case 2: {
        int x = static_cast<int>(gen() % 500), y = static_cast<int>(gen() % 500);
        a = ActionRecord::crop({{x, y, x + 1 + static_cast<int>(gen() % 90), y + 1 + static_cast<int>(gen() % 90)}});
        break;
      }
      default: a = ActionRecord::answer(word()); break;
    }
    auto text = serialize_action(a);
    auto p = parse_turn(text);
    a.raw = text;
    CHECK(p.action == a);
  }
}

TEST_CASE("observation rendering") {
  CandidateSet set;
  set.entries = {{"docA", 0.9}, {"docB", 0.5}};
  std::vector<PageImage> pages{{"docA", 10, 10, "", nullptr, ""}, {"docB", 10, 10, "", nullptr, ""}};
  auto t = render_candidates(set, pages);
  CHECK(t.role == Role::User);
  CHECK(t.text == "Image [0]: docA\nImage [1]: docB");
  CHECK(t.images.size() == 2);

  auto empty = render_candidates(CandidateSet{}, {});
  CHECK(empty.text == kNoResultsText);
  CHECK(empty.images.empty());

  std::vector<PageImage> crop{{"docA#crop0", 10, 10, "", nullptr, ""}};
  std::vector<std::string> src{"docA"};
  auto c = render_crops(crop, src);
  CHECK(c.text == "Cropped region of docA");
  CHECK(c.images.size() == 1);

  CHECK(render_selection(std::span(pages).first(1)).text == "Selected image: docA");
  CHECK(render_selection(pages).text == "Selected images: docA, docB");

  std::vector<BBox> regions{{0, 0, 5, 5}, {5, 5, 10, 10}, {1, 2, 3, 4}};
  CHECK(format_regions(regions) == "Region [0]: 0,0,5,5\nRegion [1]: 5,5,10,10\nRegion [2]: 1,2,3,4");
}
