#include "docrag/serialization.hpp"

#include <fstream>
#include <unistd.h>

#include "docrag/errors.hpp"

namespace docrag {

using nlohmann::json;

namespace {

template <typename T>
T required(const json& j, const char* key) {
  if (!j.contains(key)) throw SchemaError(std::string("missing field ") + key);
  return j.at(key).get<T>();
}

template <typename Enum, typename Parse>
Enum enum_field(const json& j, const char* key, Parse parse) {
  auto name = required<std::string>(j, key);
  auto v = parse(name);
  if (!v) throw SchemaError(std::string("bad value for ") + key + ": " + name);
  return *v;
}

}  // namespace

json to_json(const BBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

BBox bbox_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw SchemaError("box must be [x1,y1,x2,y2]");
  return BBox{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

json to_json(const Query& q) {
  json boxes = json::object();
  for (const auto& [doc, list] : q.golden_boxes) {
    json arr = json::array();
    for (const auto& b : list) arr.push_back(to_json(b));
    boxes[doc] = std::move(arr);
  }
  return json{{"id", q.id},
              {"text", q.text},
              {"reference_answer", q.reference_answer},
              {"golden_doc_ids", q.golden_doc_ids},
              {"golden_boxes", std::move(boxes)}};
}

Query query_from_json(const json& j) {
  Query q;
  q.id = required<std::string>(j, "id");
  q.text = required<std::string>(j, "text");
  q.reference_answer = required<std::string>(j, "reference_answer");
  q.golden_doc_ids = required<std::set<std::string>>(j, "golden_doc_ids");
  if (j.contains("golden_boxes")) {
    for (const auto& [doc, arr] : j.at("golden_boxes").items()) {
      auto& list = q.golden_boxes[doc];
      for (const auto& b : arr) list.push_back(bbox_from_json(b));
    }
  }
  return q;
}

json to_json(const PageImage& p, ImageWire wire) {
  json j{{"doc_id", p.doc_id}, {"width", p.width}, {"height", p.height}, {"image_path", p.image_path}};
  if (!p.text_proxy.empty()) j["text_proxy"] = p.text_proxy;
  if (wire == ImageWire::Base64 && p.raster) j["data_base64"] = base64_encode(encode_ppm(*p.raster));
  if (wire == ImageWire::FileUrl && !p.image_path.empty()) {
    j["url"] = "file://" + std::filesystem::absolute(p.image_path).string();
  }
  return j;
}

PageImage page_from_json(const json& j) {
  PageImage p;
  p.doc_id = required<std::string>(j, "doc_id");
  p.width = required<int>(j, "width");
  p.height = required<int>(j, "height");
  p.image_path = j.value("image_path", std::string{});
  p.text_proxy = j.value("text_proxy", std::string{});
  if (j.contains("data_base64")) {
    p.raster = std::make_shared<const Raster>(decode_ppm(base64_decode(j.at("data_base64").get<std::string>())));
  }
  return p;
}

json to_json(const ActionRecord& a) {
  json j{{"kind", std::string(to_string(a.kind))}, {"raw", a.raw}};
  if (a.query) j["query"] = *a.query;
  if (a.indices) j["indices"] = *a.indices;
  if (a.boxes) {
    json arr = json::array();
    for (const auto& b : *a.boxes) arr.push_back(to_json(b));
    j["boxes"] = std::move(arr);
  }
  if (a.answer_text) j["answer_text"] = *a.answer_text;
  if (!a.errors.empty()) {
    json errs = json::array();
    for (const auto& e : a.errors) {
      errs.push_back({{"code", std::string(to_string(e.code))},
                      {"begin", e.begin},
                      {"end", e.end},
                      {"message", e.message}});
    }
    j["errors"] = std::move(errs);
  }
  return j;
}

ActionRecord action_from_json(const json& j) {
  ActionRecord a;
  a.kind = enum_field<ActionKind>(j, "kind", action_kind_from_string);
  a.raw = j.value("raw", std::string{});
  if (j.contains("query")) a.query = j.at("query").get<std::string>();
  if (j.contains("indices")) a.indices = j.at("indices").get<std::vector<std::size_t>>();
  if (j.contains("boxes")) {
    std::vector<BBox> boxes;
    for (const auto& b : j.at("boxes")) boxes.push_back(bbox_from_json(b));
    a.boxes = std::move(boxes);
  }
  if (j.contains("answer_text")) a.answer_text = j.at("answer_text").get<std::string>();
  if (j.contains("errors")) {
    for (const auto& e : j.at("errors")) {
      a.errors.push_back(FormatError{enum_field<FormatErrorCode>(e, "code", format_error_code_from_string),
                                     required<std::size_t>(e, "begin"), required<std::size_t>(e, "end"),
                                     e.value("message", std::string{})});
    }
  }
  return a;
}

json to_json(const Turn& t, ImageWire wire) {
  json images = json::array();
  for (const auto& p : t.images) images.push_back(to_json(p, wire));
  json j{{"role", std::string(to_string(t.role))}, {"text", t.text}, {"images", std::move(images)}};
  if (t.thought) j["thought"] = *t.thought;
  if (t.parsed) j["parsed"] = to_json(*t.parsed);
  return j;
}

Turn turn_from_json(const json& j) {
  Turn t;
  t.role = enum_field<Role>(j, "role", role_from_string);
  t.text = required<std::string>(j, "text");
  if (j.contains("images")) {
    for (const auto& p : j.at("images")) t.images.push_back(page_from_json(p));
  }
  if (j.contains("thought")) t.thought = j.at("thought").get<std::string>();
  if (j.contains("parsed")) t.parsed = action_from_json(j.at("parsed"));
  return t;
}

json to_json(const CandidateSet& c) {
  json entries = json::array();
  for (const auto& e : c.entries) entries.push_back({{"doc_id", e.doc_id}, {"score", e.score}});
  return json{{"step_index", c.step_index}, {"k", c.k}, {"entries", std::move(entries)}};
}

CandidateSet candidates_from_json(const json& j) {
  CandidateSet c;
  c.step_index = j.value("step_index", std::size_t{0});
  c.k = required<std::size_t>(j, "k");
  for (const auto& e : j.at("entries")) {
    c.entries.push_back({required<std::string>(e, "doc_id"), required<double>(e, "score")});
  }
  return c;
}

json to_json(const RewardBreakdown& r) {
  return json{{"r_pat", r.r_pat}, {"r_ir", r.r_ir},     {"r_sel", r.r_sel}, {"r_crop", r.r_crop},
              {"r_ans", r.r_ans}, {"lambdas", r.lambdas}, {"total", r.total}};
}

RewardBreakdown reward_from_json(const json& j) {
  RewardBreakdown r;
  r.r_pat = required<double>(j, "r_pat");
  r.r_ir = required<double>(j, "r_ir");
  r.r_sel = required<double>(j, "r_sel");
  r.r_crop = required<double>(j, "r_crop");
  r.r_ans = required<double>(j, "r_ans");
  r.lambdas = required<Lambdas>(j, "lambdas");
  r.total = required<double>(j, "total");
  return r;
}

json to_json(const StepResult& s, ImageWire wire) {
  json errs = json::array();
  for (const auto& e : s.errors) {
    errs.push_back(
        {{"code", std::string(to_string(e.code))}, {"begin", e.begin}, {"end", e.end}, {"message", e.message}});
  }
  return json{{"observation", s.observation ? to_json(*s.observation, wire) : json(nullptr)},
              {"terminated", s.terminated},
              {"termination_reason", std::string(to_string(s.termination_reason))},
              {"errors", std::move(errs)},
              {"warnings", s.warnings}};
}

StepResult step_result_from_json(const json& j) {
  StepResult s;
  if (j.contains("observation") && !j.at("observation").is_null()) s.observation = turn_from_json(j.at("observation"));
  s.terminated = required<bool>(j, "terminated");
  s.termination_reason = enum_field<TerminationReason>(j, "termination_reason", termination_reason_from_string);
  for (const auto& e : j.value("errors", json::array())) {
    s.errors.push_back(FormatError{enum_field<FormatErrorCode>(e, "code", format_error_code_from_string),
                                   required<std::size_t>(e, "begin"), required<std::size_t>(e, "end"),
                                   e.value("message", std::string{})});
  }
  s.warnings = j.value("warnings", std::vector<std::string>{});
  return s;
}

json to_json(const Trajectory& t, ImageWire wire) {
  json turns = json::array();
  for (const auto& turn : t.turns) turns.push_back(to_json(turn, wire));
  json history = json::array();
  for (const auto& c : t.candidate_history) history.push_back(to_json(c));
  json selections = json::array();
  for (const auto& s : t.selected_history) {
    selections.push_back({{"search_index", s.search_index}, {"doc_ids", s.doc_ids}});
  }
  json boxes = json::array();
  for (const auto& p : t.predicted_boxes) boxes.push_back({{"doc_id", p.doc_id}, {"box", to_json(p.box)}});

  json j{{"schema_version", kTrajectorySchemaVersion},
         {"id", t.id},
         {"query_id", t.query.id},
         {"query", to_json(t.query)},
         {"turns", std::move(turns)},
         {"candidate_history", std::move(history)},
         {"selections", std::move(selections)},
         {"predicted_boxes", std::move(boxes)},
         {"final_answer", t.final_answer ? json(*t.final_answer) : json(nullptr)},
         {"terminated", t.terminated},
         {"termination_reason", std::string(to_string(t.termination_reason))},
         {"soft_error_steps", t.soft_error_steps},
         {"policy_error", t.policy_error ? json(*t.policy_error) : json(nullptr)},
         {"reward", t.reward ? to_json(*t.reward) : json(nullptr)},
         {"timing", {{"elapsed_ms", t.elapsed_ms}}}};
  return j;
}

Trajectory trajectory_from_json(const json& j) {
  try {
    int version = required<int>(j, "schema_version");
    if (version != kTrajectorySchemaVersion) {
      throw SchemaError("unsupported trajectory schema_version " + std::to_string(version));
    }
    Trajectory t;
    t.id = required<std::string>(j, "id");
    t.query = query_from_json(j.at("query"));
    for (const auto& turn : j.at("turns")) t.turns.push_back(turn_from_json(turn));
    for (const auto& c : j.at("candidate_history")) t.candidate_history.push_back(candidates_from_json(c));
    for (const auto& s : j.at("selections")) {
      t.selected_history.push_back(
          {required<std::size_t>(s, "search_index"), required<std::vector<std::string>>(s, "doc_ids")});
    }
    for (const auto& p : j.at("predicted_boxes")) {
      t.predicted_boxes.push_back({required<std::string>(p, "doc_id"), bbox_from_json(p.at("box"))});
    }
    if (!j.at("final_answer").is_null()) t.final_answer = j.at("final_answer").get<std::string>();
    t.terminated = required<bool>(j, "terminated");
    t.termination_reason = enum_field<TerminationReason>(j, "termination_reason", termination_reason_from_string);
    t.soft_error_steps = j.value("soft_error_steps", std::vector<std::size_t>{});
    if (j.contains("policy_error") && !j.at("policy_error").is_null()) {
      t.policy_error = j.at("policy_error").get<std::string>();
    }
    if (j.contains("reward") && !j.at("reward").is_null()) t.reward = reward_from_json(j.at("reward"));
    if (j.contains("timing")) t.elapsed_ms = j.at("timing").value("elapsed_ms", 0.0);
    return t;
  } catch (const json::exception& e) {
    throw SchemaError(e.what());
  }
}

std::string base64_decode(std::string_view text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::string out;
  std::uint32_t buf = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=') break;
    int v = value(c);
    if (v < 0) throw SchemaError("invalid base64 character");
    buf = (buf << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<char>((buf >> bits) & 0xFF));
    }
  }
  return out;
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw SchemaError(std::string("invalid JSON: ") + e.what(), lineno);
    }
  }
  return out;
}

namespace {

void write_lines_atomic(const std::filesystem::path& path, std::span<const json> records, bool keep_existing) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    if (keep_existing && std::filesystem::exists(path)) {
      std::ifstream in(path, std::ios::binary);
      out << in.rdbuf();
    }
    for (const auto& r : records) out << r.dump() << '\n';
    out.flush();
    if (!out) throw IoError("short write on " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

void append_jsonl(const std::filesystem::path& path, std::span<const json> records) {
  write_lines_atomic(path, records, true);
}

void write_jsonl(const std::filesystem::path& path, std::span<const json> records) {
  write_lines_atomic(path, records, false);
}

void TrajectoryStore::append(std::span<const Trajectory> trajectories) const {
  auto dir = path_.parent_path();
  if (dir.empty()) dir = ".";
  std::vector<json> records;
  for (auto t : trajectories) {
    std::size_t step = 0;
    for (auto& turn : t.turns) {
      if (turn.role == Role::Assistant) {
        ++step;
        continue;
      }
      std::size_t n = 0;
      for (auto& img : turn.images) {
        if (step == 0 || !img.raster || !img.image_path.empty()) continue;
        std::string name = t.id + "_" + std::to_string(step - 1) + (n ? "_" + std::to_string(n) : "") + ".ppm";
        write_ppm(dir / name, *img.raster);
        img.image_path = (dir / name).string();
        img.raster.reset();
        ++n;
      }
    }
    records.push_back(to_json(t, ImageWire::FileUrl));
  }
  append_jsonl(path_, records);
}

std::vector<Trajectory> TrajectoryStore::load() const {
  std::vector<Trajectory> out;
  std::size_t lineno = 0;
  for (const auto& j : read_jsonl(path_)) {
    ++lineno;
    try {
      out.push_back(trajectory_from_json(j));
    } catch (const SchemaError& e) {
      throw SchemaError(e.what(), lineno);
    }
  }
  return out;
}

}  // namespace docrag
