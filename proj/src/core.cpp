#include "docrag/core.hpp"

#include <algorithm>
#include <cctype>

#include "docrag/errors.hpp"

namespace docrag {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(std::string_view s, const std::array<std::pair<Enum, std::string_view>, N>& table) {
  for (const auto& [value, name] : table) {
    if (name == s) return value;
  }
  return std::nullopt;
}

template <typename Enum, std::size_t N>
std::string_view name_of(Enum e, const std::array<std::pair<Enum, std::string_view>, N>& table) {
  for (const auto& [value, name] : table) {
    if (value == e) return name;
  }
  return "?";
}

constexpr std::array<std::pair<ActionKind, std::string_view>, 5> kActionKinds{{
    {ActionKind::Search, "search"},
    {ActionKind::Select, "select"},
    {ActionKind::Crop, "crop"},
    {ActionKind::Answer, "answer"},
    {ActionKind::Malformed, "malformed"},
}};

constexpr std::array<std::pair<FormatErrorCode, std::string_view>, 5> kErrorCodes{{
    {FormatErrorCode::UnclosedTag, "UnclosedTag"},
    {FormatErrorCode::MultipleActions, "MultipleActions"},
    {FormatErrorCode::UnknownTag, "UnknownTag"},
    {FormatErrorCode::BadPayload, "BadPayload"},
    {FormatErrorCode::MissingAction, "MissingAction"},
}};

constexpr std::array<std::pair<Role, std::string_view>, 3> kRoles{{
    {Role::System, "system"},
    {Role::User, "user"},
    {Role::Assistant, "assistant"},
}};

constexpr std::array<std::pair<TerminationReason, std::string_view>, 3> kReasons{{
    {TerminationReason::None, "none"},
    {TerminationReason::Answered, "answered"},
    {TerminationReason::BudgetExhausted, "budget_exhausted"},
}};

}  // namespace

std::string to_string(const BBox& box) {
  return std::to_string(box.x1) + "," + std::to_string(box.y1) + "," + std::to_string(box.x2) + "," +
         std::to_string(box.y2);
}

void Query::validate() const {
  if (id.empty()) throw InvalidArgument("query id must be nonempty");
  for (const auto& [doc, boxes] : golden_boxes) {
    if (!golden_doc_ids.contains(doc)) {
      throw InvalidArgument("query " + id + ": golden box on non-golden doc " + doc);
    }
    for (const auto& b : boxes) {
      if (!b.valid()) throw InvalidArgument("query " + id + ": invalid golden box " + to_string(b));
    }
  }
}

std::string_view to_string(ActionKind kind) { return name_of(kind, kActionKinds); }
std::optional<ActionKind> action_kind_from_string(std::string_view s) { return lookup(s, kActionKinds); }
std::string_view to_string(FormatErrorCode code) { return name_of(code, kErrorCodes); }
std::optional<FormatErrorCode> format_error_code_from_string(std::string_view s) { return lookup(s, kErrorCodes); }
std::string_view to_string(Role role) { return name_of(role, kRoles); }
std::optional<Role> role_from_string(std::string_view s) { return lookup(s, kRoles); }
std::string_view to_string(TerminationReason reason) { return name_of(reason, kReasons); }
std::optional<TerminationReason> termination_reason_from_string(std::string_view s) { return lookup(s, kReasons); }

ActionRecord ActionRecord::search(std::string q) {
  ActionRecord a;
  a.kind = ActionKind::Search;
  a.query = std::move(q);
  return a;
}

ActionRecord ActionRecord::select(std::vector<std::size_t> idx) {
  ActionRecord a;
  a.kind = ActionKind::Select;
  a.indices = std::move(idx);
  return a;
}

ActionRecord ActionRecord::crop(std::vector<BBox> b) {
  ActionRecord a;
  a.kind = ActionKind::Crop;
  a.boxes = std::move(b);
  return a;
}

ActionRecord ActionRecord::answer(std::string text) {
  ActionRecord a;
  a.kind = ActionKind::Answer;
  a.answer_text = std::move(text);
  return a;
}

double RewardBreakdown::recompute_total() const {
  double t = lambdas[0] * r_pat;
  t += lambdas[1] * r_ir;
  t += lambdas[2] * r_sel;
  t += lambdas[3] * r_crop;
  t += lambdas[4] * r_ans;
  return t;
}

std::size_t Trajectory::search_count() const {
  return static_cast<std::size_t>(std::count_if(turns.begin(), turns.end(), [](const Turn& t) {
    return t.role == Role::Assistant && t.parsed && t.parsed->kind == ActionKind::Search;
  }));
}

std::size_t Trajectory::assistant_turns() const {
  return static_cast<std::size_t>(
      std::count_if(turns.begin(), turns.end(), [](const Turn& t) { return t.role == Role::Assistant; }));
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::string normalize_answer(std::string_view text) {
  std::string lowered;
  lowered.reserve(text.size());
  for (char c : text) {
    auto u = static_cast<unsigned char>(c);
    if (u < 0x80 && std::ispunct(u)) continue;
    lowered.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : c);
  }
  std::string out;
  for (const auto& tok : split_whitespace(lowered)) {
    if (tok == "a" || tok == "an" || tok == "the") continue;
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

}  // namespace docrag
