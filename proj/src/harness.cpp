#include "docrag/harness.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "docrag/errors.hpp"

namespace docrag {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

double parse_double(const std::string& key, const std::string& text) {
  auto t = trim(text);
  double v = 0.0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || p != t.data() + t.size() || t.empty()) {
    throw InvalidArgument("config " + key + ": not a number: " + text);
  }
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void Config::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) throw SchemaError("expected key = value", lineno);
    auto key = lower(trim(std::string_view(t).substr(0, eq)));
    if (key.empty()) throw SchemaError("empty key", lineno);
    values_[key] = trim(std::string_view(t).substr(eq + 1));
  }
}

void Config::merge_environment(const char* const* environ, std::string_view prefix) {
  if (!environ) return;
  for (auto* e = environ; *e; ++e) {
    std::string_view entry(*e);
    if (!entry.starts_with(prefix)) continue;
    auto eq = entry.find('=');
    if (eq == std::string_view::npos || eq == prefix.size()) continue;
    values_[lower(entry.substr(prefix.size(), eq - prefix.size()))] = std::string(entry.substr(eq + 1));
  }
}

std::optional<std::string> Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string Config::get_or(const std::string& key, std::string fallback) const {
  auto v = get(key);
  return v ? *v : std::move(fallback);
}

std::optional<double> Config::get_double(const std::string& key) const {
  auto v = get(key);
  if (!v) return std::nullopt;
  return parse_double(key, *v);
}

std::optional<std::size_t> Config::get_size(const std::string& key) const {
  auto v = get(key);
  if (!v) return std::nullopt;
  auto t = trim(*v);
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc{} || p != t.data() + t.size() || t.empty()) {
    throw InvalidArgument("config " + key + ": not a non-negative integer: " + *v);
  }
  return out;
}

SessionConfig session_config_from(const Config& cfg) {
  SessionConfig s;
  if (auto v = cfg.get_size("t_max")) s.t_max = *v;
  if (auto v = cfg.get_size("k")) s.k = *v;
  if (auto v = cfg.get_size("max_prompt_chars")) s.max_prompt_chars = *v;
  if (auto v = cfg.get_size("max_response_chars")) s.max_response_chars = *v;
  if (auto v = cfg.get_size("zoom_long_side")) s.zoom.target_long_side = static_cast<int>(*v);
  if (auto v = cfg.get_size("zoom_min_side")) s.zoom.min_crop_side = static_cast<int>(*v);
  if (auto v = cfg.get("interpolation")) {
    if (*v == "nearest") {
      s.zoom.interpolation = Interpolation::Nearest;
    } else if (*v == "bilinear") {
      s.zoom.interpolation = Interpolation::Bilinear;
    } else {
      throw InvalidArgument("interpolation must be nearest or bilinear");
    }
  }
  if (auto v = cfg.get("prompt_template")) s.prompt_template = read_file(*v);
  s.validate();
  return s;
}

RewardWeights parse_weights(std::string_view text) {
  RewardWeights w;
  std::size_t i = 0;
  std::size_t pos = 0;
  while (true) {
    auto comma = text.find(',', pos);
    auto part = std::string(text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (i >= w.lambdas.size()) throw InvalidArgument("weights: expected 5 values");
    w.lambdas[i++] = parse_double("weights", part);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  if (i != w.lambdas.size()) throw InvalidArgument("weights: expected 5 values");
  w.validate();
  return w;
}

RewardWeights weights_from(const Config& cfg) {
  auto v = cfg.get("weights");
  return v ? parse_weights(*v) : RewardWeights{};
}

nlohmann::json StatsReport::to_json() const {
  return nlohmann::json{{"trajectories", trajectories},
                        {"recall_search_only", recall_search_only},
                        {"recall_after_selection", recall_after_selection},
                        {"crop_frequency", crop_frequency},
                        {"implication_violations", implication_violations},
                        {"scored", scored},
                        {"mean_r_pat", mean_components.r_pat},
                        {"mean_r_ir", mean_components.r_ir},
                        {"mean_r_sel", mean_components.r_sel},
                        {"mean_r_crop", mean_components.r_crop},
                        {"mean_r_ans", mean_components.r_ans},
                        {"mean_total", mean_total}};
}

StatsReport compute_stats(std::span<const Trajectory> trajectories) {
  if (trajectories.empty()) throw InvalidArgument("no trajectories to summarize");
  StatsReport r;
  r.trajectories = trajectories.size();
  std::size_t retrieved = 0, selected = 0, cropped = 0;
  for (const auto& t : trajectories) {
    const auto& golden = t.query.golden_doc_ids;
    bool got = false;
    for (const auto& d : interleave_candidates(t.candidate_history)) {
      if (golden.contains(d)) {
        got = true;
        break;
      }
    }
    bool sel = false;
    for (const auto& s : t.selected_history) {
      for (const auto& d : s.doc_ids) sel = sel || golden.contains(d);
    }
    retrieved += got;
    selected += sel;
    cropped += t.has_crop();
    if (sel && !got) ++r.implication_violations;
    if (t.reward) {
      ++r.scored;
      r.mean_components.r_pat += t.reward->r_pat;
      r.mean_components.r_ir += t.reward->r_ir;
      r.mean_components.r_sel += t.reward->r_sel;
      r.mean_components.r_crop += t.reward->r_crop;
      r.mean_components.r_ans += t.reward->r_ans;
      r.mean_total += t.reward->total;
    }
  }
  double n = static_cast<double>(trajectories.size());
  r.recall_search_only = static_cast<double>(retrieved) / n;
  r.recall_after_selection = static_cast<double>(selected) / n;
  r.crop_frequency = static_cast<double>(cropped) / n;
  if (r.scored) {
    double s = static_cast<double>(r.scored);
    r.mean_components.r_pat /= s;
    r.mean_components.r_ir /= s;
    r.mean_components.r_sel /= s;
    r.mean_components.r_crop /= s;
    r.mean_components.r_ans /= s;
    r.mean_total /= s;
  }
  return r;
}

}  // namespace docrag
