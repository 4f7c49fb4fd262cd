#pragma once

// Tag grammar spoken between the policy and the environment:
//
//   turn    := ws [ "<think>" text "</think>" ] ws action ws
//   action  := "<search>" text "</search>"
//            | "<select>" uint { "," uint } "</select>"
//            | "<bbox>" tuple { ";" tuple } "</bbox>"
//            | "<answer>" text "</answer>"
//   tuple   := int "," int "," int "," int        (x1 < x2, y1 < y2)
//
// Tags are case-sensitive, payload whitespace is trimmed, and free text outside
// tags is ignored. Any "<name>" or "</name>" token counts as a tag.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "docrag/core.hpp"

namespace docrag {

inline constexpr std::string_view kNoResultsText = "No results found.";
inline constexpr std::string_view kInvalidActionText = "Invalid action format.";
inline constexpr std::string_view kNoImagesText = "No images available for this action.";

struct ParsedTurn {
  std::optional<std::string> thought;
  ActionRecord action;  // kind == Malformed with a nonempty error list on failure
};

/// Total: never throws on any input.
ParsedTurn parse_turn(std::string_view text);

/// Canonical tag text for a well-formed action. Throws InvalidArgument for
/// Malformed actions or payloads that could not survive a parse round trip.
std::string serialize_action(const ActionRecord& action);

/// serialize_action prefixed with a <think> segment.
std::string serialize_turn(std::string_view thought, const ActionRecord& action);

/// True when `text` contains something the scanner would treat as a tag.
bool contains_tag(std::string_view text);

/// Candidate list as a User turn: "Image [i]: <doc_id>" per rank, pages attached in
/// rank order. `pages` must be parallel to `candidates.entries`.
Turn render_candidates(const CandidateSet& candidates, std::span<const PageImage> pages);

/// Selected pages with a one-line caption.
Turn render_selection(std::span<const PageImage> pages);

/// Cropped views; one caption line "Cropped region of <source>" per crop.
Turn render_crops(std::span<const PageImage> crops, std::span<const std::string> source_doc_ids);

/// Text-only User turn (sentinels such as kNoImagesText).
Turn render_message(std::string_view text);

/// "Region [i]: x1,y1,x2,y2" lines for layout proposals.
std::string format_regions(std::span<const BBox> regions);

}  // namespace docrag
