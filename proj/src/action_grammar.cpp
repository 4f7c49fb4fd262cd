#include "docrag/action_grammar.hpp"

#include <cctype>
#include <charconv>

#include "docrag/errors.hpp"

namespace docrag {

namespace {

constexpr long long kMaxCoordinate = 1'000'000'000;

struct TagToken {
  std::string_view name;
  bool closing = false;
  std::size_t begin = 0;
  std::size_t end = 0;  // one past '>'
};

bool is_name_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_' || c == '-';
}

std::vector<TagToken> scan_tags(std::string_view text) {
  std::vector<TagToken> tags;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '<') continue;
    std::size_t j = i + 1;
    bool closing = j < text.size() && text[j] == '/';
    if (closing) ++j;
    if (j >= text.size() || !is_name_start(text[j])) continue;
    std::size_t name_begin = j;
    while (j < text.size() && is_name_char(text[j])) ++j;
    if (j >= text.size() || text[j] != '>') continue;
    tags.push_back({text.substr(name_begin, j - name_begin), closing, i, j + 1});
    i = j;
  }
  return tags;
}

std::optional<ActionKind> action_for_tag(std::string_view name) {
  if (name == "search") return ActionKind::Search;
  if (name == "select") return ActionKind::Select;
  if (name == "bbox") return ActionKind::Crop;
  if (name == "answer") return ActionKind::Answer;
  return std::nullopt;
}

std::string_view tag_for_action(ActionKind kind) {
  switch (kind) {
    case ActionKind::Search: return "search";
    case ActionKind::Select: return "select";
    case ActionKind::Crop: return "bbox";
    case ActionKind::Answer: return "answer";
    case ActionKind::Malformed: break;
  }
  return {};
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      parts.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return parts;
}

std::optional<long long> parse_int(std::string_view raw, bool allow_negative) {
  std::string t = trim(raw);
  if (t.empty()) return std::nullopt;
  std::size_t digits_from = (allow_negative && t[0] == '-') ? 1 : 0;
  if (digits_from == t.size()) return std::nullopt;
  for (std::size_t i = digits_from; i < t.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(t[i]))) return std::nullopt;
  }
  long long v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
  if (v > kMaxCoordinate || v < -kMaxCoordinate) return std::nullopt;
  return v;
}

std::optional<std::string> payload_error(ActionKind kind, std::string_view payload, ActionRecord& out) {
  std::string body = trim(payload);
  switch (kind) {
    case ActionKind::Search:
      if (body.empty()) return "empty search query";
      out.query = body;
      return std::nullopt;
    case ActionKind::Answer:
      if (body.empty()) return "empty answer";
      out.answer_text = body;
      return std::nullopt;
    case ActionKind::Select: {
      std::vector<std::size_t> idx;
      for (auto part : split(body, ',')) {
        auto v = parse_int(part, false);
        if (!v) return "select payload must be comma-separated non-negative integers";
        idx.push_back(static_cast<std::size_t>(*v));
      }
      out.indices = std::move(idx);
      return std::nullopt;
    }
    case ActionKind::Crop: {
      std::vector<BBox> boxes;
      for (auto tuple : split(body, ';')) {
        auto coords = split(tuple, ',');
        if (coords.size() != 4) return "bbox tuple must have exactly 4 integers";
        long long v[4];
        for (int c = 0; c < 4; ++c) {
          auto parsed = parse_int(coords[static_cast<std::size_t>(c)], true);
          if (!parsed) return "bbox coordinates must be integers";
          v[c] = *parsed;
        }
        BBox b{static_cast<int>(v[0]), static_cast<int>(v[1]), static_cast<int>(v[2]), static_cast<int>(v[3])};
        if (b.x1 >= b.x2 || b.y1 >= b.y2) return "bbox requires x1 < x2 and y1 < y2";
        boxes.push_back(b);
      }
      out.boxes = std::move(boxes);
      return std::nullopt;
    }
    case ActionKind::Malformed: break;
  }
  return "unexpected action kind";
}

FormatError make_error(FormatErrorCode code, std::size_t begin, std::size_t end, std::string message) {
  return FormatError{code, begin, end, std::move(message)};
}

}  // namespace

bool contains_tag(std::string_view text) { return !scan_tags(text).empty(); }

ParsedTurn parse_turn(std::string_view text) {
  ParsedTurn result;
  result.action.raw = std::string(text);
  auto& errors = result.action.errors;
  auto tags = scan_tags(text);

  std::size_t action_opens = 0;
  for (const auto& tag : tags) {
    bool known = tag.name == "think" || action_for_tag(tag.name).has_value();
    if (!known) {
      errors.push_back(make_error(FormatErrorCode::UnknownTag, tag.begin, tag.end,
                                  "unknown tag <" + std::string(tag.name) + ">"));
      continue;
    }
    if (!tag.closing && action_for_tag(tag.name) && ++action_opens == 2) {
      errors.push_back(make_error(FormatErrorCode::MultipleActions, tag.begin, tag.end,
                                  "more than one action tag in a single turn"));
    }
  }
  if (action_opens == 0) {
    errors.push_back(make_error(FormatErrorCode::MissingAction, 0, text.size(), "no action tag found"));
  }

  // Structural walk: every open tag is immediately followed by its own close tag.
  bool seen_think = false;
  bool seen_action = false;
  std::optional<ActionKind> kind;
  std::string_view payload;
  std::size_t payload_begin = 0;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const auto& tag = tags[i];
    if (tag.closing) {
      errors.push_back(make_error(FormatErrorCode::UnclosedTag, tag.begin, tag.end,
                                  "closing </" + std::string(tag.name) + "> without opening tag"));
      continue;
    }
    if (i + 1 >= tags.size() || !tags[i + 1].closing || tags[i + 1].name != tag.name) {
      errors.push_back(make_error(FormatErrorCode::UnclosedTag, tag.begin, tag.end,
                                  "<" + std::string(tag.name) + "> is not closed"));
      continue;
    }
    const auto& close = tags[i + 1];
    std::string_view inner = text.substr(tag.end, close.begin - tag.end);
    if (tag.name == "think") {
      if (seen_think || seen_action) {
        errors.push_back(make_error(FormatErrorCode::UnknownTag, tag.begin, close.end,
                                    "<think> must appear once, before the action"));
      } else {
        result.thought = trim(inner);
      }
      seen_think = true;
    } else if (auto k = action_for_tag(tag.name)) {
      if (!seen_action) {
        kind = k;
        payload = inner;
        payload_begin = tag.end;
      }
      seen_action = true;
    }
    ++i;
  }

  if (errors.empty() && kind) {
    ActionRecord typed;
    typed.kind = *kind;
    typed.raw = result.action.raw;
    if (auto err = payload_error(*kind, payload, typed)) {
      errors.push_back(make_error(FormatErrorCode::BadPayload, payload_begin, payload_begin + payload.size(), *err));
    } else {
      result.action = std::move(typed);
      return result;
    }
  }
  if (errors.empty()) {
    errors.push_back(make_error(FormatErrorCode::MissingAction, 0, text.size(), "no action tag found"));
  }
  result.action.kind = ActionKind::Malformed;
  return result;
}

namespace {

void check_text_payload(const std::optional<std::string>& payload, std::string_view what) {
  if (!payload || payload->empty()) throw InvalidArgument(std::string(what) + " payload is empty");
  if (trim(*payload) != *payload) throw InvalidArgument(std::string(what) + " payload has surrounding whitespace");
  if (contains_tag(*payload)) throw InvalidArgument(std::string(what) + " payload contains a tag");
}

}  // namespace

std::string serialize_action(const ActionRecord& action) {
  std::string body;
  switch (action.kind) {
    case ActionKind::Malformed:
      throw InvalidArgument("cannot serialize a malformed action");
    case ActionKind::Search:
      check_text_payload(action.query, "search");
      body = *action.query;
      break;
    case ActionKind::Answer:
      check_text_payload(action.answer_text, "answer");
      body = *action.answer_text;
      break;
    case ActionKind::Select:
      if (!action.indices || action.indices->empty()) throw InvalidArgument("select needs at least one index");
      for (std::size_t i = 0; i < action.indices->size(); ++i) {
        if (static_cast<long long>((*action.indices)[i]) > kMaxCoordinate) {
          throw InvalidArgument("select index out of range");
        }
        if (i) body += ',';
        body += std::to_string((*action.indices)[i]);
      }
      break;
    case ActionKind::Crop:
      if (!action.boxes || action.boxes->empty()) throw InvalidArgument("bbox needs at least one box");
      for (std::size_t i = 0; i < action.boxes->size(); ++i) {
        const auto& b = (*action.boxes)[i];
        if (b.x1 >= b.x2 || b.y1 >= b.y2) throw InvalidArgument("bbox requires x1 < x2 and y1 < y2");
        if (i) body += ';';
        body += to_string(b);
      }
      break;
  }
  auto tag = tag_for_action(action.kind);
  return "<" + std::string(tag) + ">" + body + "</" + std::string(tag) + ">";
}

std::string serialize_turn(std::string_view thought, const ActionRecord& action) {
  if (contains_tag(thought)) throw InvalidArgument("thought contains a tag");
  return "<think>" + std::string(thought) + "</think>" + serialize_action(action);
}

Turn render_candidates(const CandidateSet& candidates, std::span<const PageImage> pages) {
  if (candidates.empty()) return render_message(kNoResultsText);
  if (pages.size() != candidates.size()) throw InvalidArgument("pages must be parallel to candidates");
  Turn turn;
  turn.role = Role::User;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (i) turn.text += '\n';
    turn.text += "Image [" + std::to_string(i) + "]: " + candidates.entries[i].doc_id;
  }
  turn.images.assign(pages.begin(), pages.end());
  return turn;
}

Turn render_selection(std::span<const PageImage> pages) {
  Turn turn;
  turn.role = Role::User;
  turn.text = pages.size() == 1 ? "Selected image: " : "Selected images: ";
  for (std::size_t i = 0; i < pages.size(); ++i) {
    if (i) turn.text += ", ";
    turn.text += pages[i].doc_id;
  }
  turn.images.assign(pages.begin(), pages.end());
  return turn;
}

Turn render_crops(std::span<const PageImage> crops, std::span<const std::string> source_doc_ids) {
  if (crops.size() != source_doc_ids.size()) throw InvalidArgument("one source id per crop required");
  Turn turn;
  turn.role = Role::User;
  for (std::size_t i = 0; i < crops.size(); ++i) {
    if (i) turn.text += '\n';
    turn.text += "Cropped region of " + source_doc_ids[i];
  }
  turn.images.assign(crops.begin(), crops.end());
  return turn;
}

Turn render_message(std::string_view text) {
  Turn turn;
  turn.role = Role::User;
  turn.text = std::string(text);
  return turn;
}

std::string format_regions(std::span<const BBox> regions) {
  std::string out;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    if (i) out += '\n';
    out += "Region [" + std::to_string(i) + "]: " + to_string(regions[i]);
  }
  return out;
}

}  // namespace docrag
