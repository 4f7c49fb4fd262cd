#include "docrag/environment.hpp"

#include <chrono>

#include "docrag/action_grammar.hpp"
#include "docrag/errors.hpp"

namespace docrag {

const char* const kDefaultPromptTemplate =
    "Answer the question using the document image corpus. Each turn, write your reasoning in "
    "<think>...</think> and then exactly one action: <search>query</search>, "
    "<select>i,j</select>, <bbox>x1,y1,x2,y2</bbox> or <answer>text</answer>.\n"
    "Question: {question}";

void SessionConfig::validate() const {
  if (t_max < 1) throw InvalidArgument("t_max must be >= 1");
  if (k < 1) throw InvalidArgument("k must be >= 1");
  if (max_response_chars < 1) throw InvalidArgument("max_response_chars must be >= 1");
  zoom.validate();
}

namespace {

std::string fill_template(const std::string& tpl, const std::string& question) {
  static constexpr std::string_view kSlot = "{question}";
  std::string out;
  std::size_t pos = 0;
  bool filled = false;
  while (true) {
    auto hit = tpl.find(kSlot, pos);
    if (hit == std::string::npos) break;
    out.append(tpl, pos, hit - pos);
    out += question;
    pos = hit + kSlot.size();
    filled = true;
  }
  out.append(tpl, pos);
  if (!filled) out += (out.empty() ? "" : "\n") + question;
  return out;
}

}  // namespace

Session::Session(Query query, const Corpus& corpus, const Retriever& retriever, SessionConfig cfg,
                 std::string trajectory_id, const LayoutProvider* layout)
    : corpus_(corpus), retriever_(retriever), cfg_(std::move(cfg)), layout_(layout) {
  cfg_.validate();
  traj_.id = trajectory_id.empty() ? query.id : std::move(trajectory_id);
  Turn first;
  first.role = Role::User;
  first.text = fill_template(cfg_.prompt_template, query.text);
  traj_.turns.push_back(std::move(first));
  traj_.query = std::move(query);
}

Session create_session(const Query& query, const Corpus& corpus, const Retriever& retriever,
                       const SessionConfig& cfg) {
  return Session(query, corpus, retriever, cfg);
}

Turn Session::soft_error(std::string_view message) {
  traj_.soft_error_steps.push_back(steps_);
  return render_message(message);
}

Turn Session::on_search(const ActionRecord& action) {
  CandidateSet found = retriever_.search(*action.query, cfg_.k);
  found.step_index = traj_.candidate_history.size();
  found.k = cfg_.k;
  std::vector<PageImage> pages;
  pages.reserve(found.size());
  for (const auto& c : found.entries) pages.push_back(corpus_.at(c.doc_id));
  Turn obs = render_candidates(found, pages);
  open_pool_ = traj_.candidate_history.size();
  traj_.candidate_history.push_back(std::move(found));
  return obs;
}

Turn Session::on_select(const ActionRecord& action, StepResult& result) {
  if (!open_pool_) return soft_error(kNoImagesText);
  const auto& pool = traj_.candidate_history[*open_pool_];
  SelectionResult picked;
  try {
    picked = select_images(pool, *action.indices, corpus_);
  } catch (const EmptySelection&) {
    return soft_error(kNoImagesText);
  }
  for (auto idx : picked.dropped) {
    result.warnings.push_back("index " + std::to_string(idx) + " is outside the " + std::to_string(pool.size()) +
                              " candidates");
  }
  SelectionStep sel;
  sel.search_index = *open_pool_;
  for (const auto& p : picked.pages) sel.doc_ids.push_back(p.doc_id);
  traj_.selected_history.push_back(std::move(sel));
  open_pool_.reset();
  selection_ = std::move(picked.pages);

  Turn obs = render_selection(selection_);
  if (layout_) {
    auto regions = layout_->propose(selection_.front());
    if (!regions.empty()) {
      obs.text += "\nCandidate regions of " + selection_.front().doc_id + ":\n" + format_regions(regions);
      offered_regions_.insert(offered_regions_.end(), regions.begin(), regions.end());
    }
  }
  return obs;
}

Turn Session::on_crop(const ActionRecord& action) {
  if (selection_.empty()) return soft_error(kNoImagesText);
  const PageImage& target = selection_.front();
  std::vector<BBox> clamped;
  try {
    for (const auto& b : *action.boxes) {
      BBox c = clamp_bbox(b, target.width, target.height);
      if (c.width() < cfg_.zoom.min_crop_side || c.height() < cfg_.zoom.min_crop_side) {
        throw DegenerateBox("crop too small");
      }
      clamped.push_back(c);
    }
  } catch (const DegenerateBox&) {
    return soft_error("Invalid crop region.");
  }
  std::vector<PageImage> crops;
  std::vector<std::string> sources;
  for (const auto& c : clamped) {
    crops.push_back(crop_zoom(target, c, cfg_.zoom, crops_++));
    sources.push_back(target.doc_id);
    traj_.predicted_boxes.push_back({target.doc_id, c});
  }
  return render_crops(crops, sources);
}

StepResult Session::step(std::string_view assistant_text) {
  if (traj_.terminated) throw StepAfterTermination();
  std::string_view text = assistant_text.substr(0, cfg_.max_response_chars);
  ParsedTurn parsed = parse_turn(text);

  Turn said;
  said.role = Role::Assistant;
  said.text = std::string(text);
  said.thought = parsed.thought;
  said.parsed = parsed.action;
  traj_.turns.push_back(std::move(said));

  StepResult result;
  const ActionRecord& action = parsed.action;
  Turn obs;
  switch (action.kind) {
    case ActionKind::Answer:
      traj_.final_answer = action.answer_text;
      traj_.terminated = true;
      traj_.termination_reason = TerminationReason::Answered;
      ++steps_;
      result.terminated = true;
      result.termination_reason = TerminationReason::Answered;
      return result;
    case ActionKind::Search:
      obs = on_search(action);
      break;
    case ActionKind::Select:
      obs = on_select(action, result);
      break;
    case ActionKind::Crop:
      obs = on_crop(action);
      break;
    case ActionKind::Malformed:
      obs = render_message(kInvalidActionText);
      result.errors = action.errors;
      break;
  }
  traj_.turns.push_back(obs);
  result.observation = std::move(obs);
  ++steps_;
  if (steps_ >= cfg_.t_max) {
    traj_.terminated = true;
    traj_.termination_reason = TerminationReason::BudgetExhausted;
    result.terminated = true;
    result.termination_reason = TerminationReason::BudgetExhausted;
  }
  return result;
}

void Session::abort(std::string reason) {
  traj_.policy_error = std::move(reason);
  traj_.terminated = true;
  traj_.termination_reason = TerminationReason::BudgetExhausted;
}

std::vector<Turn> Session::prompt() const {
  const auto& turns = traj_.turns;
  std::size_t total = 0;
  for (const auto& t : turns) total += t.text.size();
  std::size_t first_kept = 1;
  while (total > cfg_.max_prompt_chars && first_kept < turns.size()) {
    // Drop a whole Assistant/User exchange so roles keep alternating.
    std::size_t n = std::min<std::size_t>(2, turns.size() - first_kept);
    for (std::size_t i = 0; i < n; ++i) total -= turns[first_kept + i].text.size();
    first_kept += n;
  }
  std::vector<Turn> out;
  out.reserve(turns.size() - first_kept + 1);
  out.push_back(turns.front());
  out.insert(out.end(), turns.begin() + static_cast<std::ptrdiff_t>(first_kept), turns.end());
  return out;
}

Trajectory run_rollout(Policy& policy, const Query& query, const Corpus& corpus, const Retriever& retriever,
                       const SessionConfig& cfg, const RolloutOptions& opts) {
  auto started = std::chrono::steady_clock::now();
  Session session(query, corpus, retriever, cfg, opts.trajectory_id, opts.layout);
  while (!session.terminated()) {
    std::string text;
    try {
      auto history = session.prompt();
      text = policy.generate(history);
    } catch (const std::exception& e) {
      session.abort(e.what());
      break;
    }
    session.step(text);
  }
  Trajectory traj = std::move(session).release();
  traj.elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return traj;
}

std::string ScriptedPolicy::generate(std::span<const Turn>) {
  if (next_ >= turns_.size()) throw TransportError("scripted policy exhausted");
  return turns_[next_++];
}

}  // namespace docrag
