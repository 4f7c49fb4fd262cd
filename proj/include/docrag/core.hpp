#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "docrag/raster.hpp"

namespace docrag {

/// Axis-aligned pixel box, origin top-left, x2/y2 exclusive (width = x2 - x1).
struct BBox {
  int x1 = 0;
  int y1 = 0;
  int x2 = 0;
  int y2 = 0;

  int width() const { return x2 - x1; }
  int height() const { return y2 - y1; }
  long long area() const { return static_cast<long long>(width()) * height(); }
  /// x1 < x2, y1 < y2 and all coordinates non-negative.
  bool valid() const { return x1 < x2 && y1 < y2 && x1 >= 0 && y1 >= 0; }

  auto operator<=>(const BBox&) const = default;
};

std::string to_string(const BBox& box);

struct Query {
  std::string id;
  std::string text;
  std::string reference_answer;
  std::set<std::string> golden_doc_ids;
  std::map<std::string, std::vector<BBox>> golden_boxes;

  /// Throws InvalidArgument when the id is empty or a boxed doc is not golden.
  void validate() const;

  bool operator==(const Query&) const = default;
};

/// One page of the corpus. The pixels come from `raster` when loaded, otherwise
/// from `image_path`; a page with neither is dimension-only.
struct PageImage {
  std::string doc_id;
  int width = 0;
  int height = 0;
  std::string image_path;
  std::shared_ptr<const Raster> raster;
  std::string text_proxy;

  bool has_pixels() const { return raster != nullptr || !image_path.empty(); }

  bool operator==(const PageImage& o) const {
    return doc_id == o.doc_id && width == o.width && height == o.height && image_path == o.image_path &&
           text_proxy == o.text_proxy && (raster == o.raster || (raster && o.raster && *raster == *o.raster));
  }
};

enum class ActionKind { Search, Select, Crop, Answer, Malformed };
std::string_view to_string(ActionKind kind);
std::optional<ActionKind> action_kind_from_string(std::string_view s);

enum class FormatErrorCode { UnclosedTag, MultipleActions, UnknownTag, BadPayload, MissingAction };
std::string_view to_string(FormatErrorCode code);
std::optional<FormatErrorCode> format_error_code_from_string(std::string_view s);

struct FormatError {
  FormatErrorCode code = FormatErrorCode::MissingAction;
  std::size_t begin = 0;  // character offsets into the parsed text, [begin, end)
  std::size_t end = 0;
  std::string message;

  bool operator==(const FormatError&) const = default;
};

/// One parsed agent action. Only the optional fields belonging to `kind` are set;
/// Malformed carries `raw` and a nonempty `errors` list.
struct ActionRecord {
  ActionKind kind = ActionKind::Malformed;
  std::optional<std::string> query;
  std::optional<std::vector<std::size_t>> indices;
  std::optional<std::vector<BBox>> boxes;
  std::optional<std::string> answer_text;
  std::string raw;
  std::vector<FormatError> errors;

  static ActionRecord search(std::string q);
  static ActionRecord select(std::vector<std::size_t> idx);
  static ActionRecord crop(std::vector<BBox> b);
  static ActionRecord answer(std::string text);

  bool operator==(const ActionRecord&) const = default;
};

enum class Role { System, User, Assistant };
std::string_view to_string(Role role);
std::optional<Role> role_from_string(std::string_view s);

struct Turn {
  Role role = Role::User;
  std::string text;
  std::vector<PageImage> images;
  std::optional<std::string> thought;  // Assistant only
  std::optional<ActionRecord> parsed;  // Assistant only

  bool operator==(const Turn&) const = default;
};

struct Candidate {
  std::string doc_id;
  double score = 0.0;

  bool operator==(const Candidate&) const = default;
};

/// Ranked results of one search step: score descending, doc_id ascending on ties.
struct CandidateSet {
  std::size_t step_index = 0;
  std::vector<Candidate> entries;
  std::size_t k = 0;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }

  bool operator==(const CandidateSet&) const = default;
};

struct SelectionStep {
  std::size_t search_index = 0;  // which entry of candidate_history was selected from
  std::vector<std::string> doc_ids;

  bool operator==(const SelectionStep&) const = default;
};

struct PredictedBox {
  std::string doc_id;
  BBox box;

  bool operator==(const PredictedBox&) const = default;
};

/// Reward weights in component order: pattern, retrieval, selection, crop, answer.
using Lambdas = std::array<double, 5>;
inline constexpr Lambdas kDefaultLambdas{0.1, 0.1, 0.1, 0.1, 0.6};

struct RewardBreakdown {
  double r_pat = 0.0;
  double r_ir = 0.0;
  double r_sel = 0.0;
  double r_crop = 0.0;
  double r_ans = 0.0;
  Lambdas lambdas = kDefaultLambdas;
  double total = 0.0;

  /// Left-to-right weighted sum; the same expression that produced `total`.
  double recompute_total() const;

  bool operator==(const RewardBreakdown&) const = default;
};

enum class TerminationReason { None, Answered, BudgetExhausted };
std::string_view to_string(TerminationReason reason);
std::optional<TerminationReason> termination_reason_from_string(std::string_view s);

struct Trajectory {
  std::string id;
  Query query;
  std::vector<Turn> turns;
  std::vector<CandidateSet> candidate_history;
  std::vector<SelectionStep> selected_history;
  std::vector<PredictedBox> predicted_boxes;
  std::optional<std::string> final_answer;
  bool terminated = false;
  TerminationReason termination_reason = TerminationReason::None;
  std::vector<std::size_t> soft_error_steps;  // steps whose action was out of order or unusable
  std::optional<std::string> policy_error;
  std::optional<RewardBreakdown> reward;
  double elapsed_ms = 0.0;

  std::size_t search_count() const;
  std::size_t assistant_turns() const;
  bool has_crop() const { return !predicted_boxes.empty(); }

  bool operator==(const Trajectory&) const = default;
};

/// Lowercase, strip ASCII punctuation, drop standalone a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view text);

/// Splits on ASCII whitespace.
std::vector<std::string> split_whitespace(std::string_view text);

std::string trim(std::string_view s);

}  // namespace docrag
