#include "docrag/toy_policy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "docrag/action_grammar.hpp"
#include "docrag/errors.hpp"
#include "docrag/grpo.hpp"

namespace docrag {

namespace {

std::vector<double> softmax(const std::vector<double>& logits, double temperature) {
  std::vector<double> p(logits.size());
  double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((logits[i] - top) / temperature);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

std::vector<std::string> listed_candidates(std::span<const Turn> history) {
  std::vector<std::string> out;
  if (history.empty()) return out;
  std::istringstream lines(history.back().text);
  std::string line;
  while (std::getline(lines, line)) {
    auto colon = line.find("]: ");
    if (line.rfind("Image [", 0) == 0 && colon != std::string::npos) out.push_back(line.substr(colon + 3));
  }
  return out;
}

}  // namespace

ToyPolicy ToyPolicy::uniform(const MicroWorld& world, std::size_t k, double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be positive");
  if (k < 1) throw InvalidArgument("k must be >= 1");
  ToyPolicy p;
  p.temperature = temperature;
  for (std::size_t q = 0; q < world.queries.size(); ++q) {
    std::vector<DecisionTable> t;
    t.push_back({"style", std::vector<double>(2, 0.0)});
    t.push_back({"search", std::vector<double>(kMicroSearchTemplates, 0.0)});
    for (std::size_t s = 0; s < kMicroSearchTemplates; ++s) {
      t.push_back({"select" + std::to_string(s), std::vector<double>(k, 0.0)});
    }
    t.push_back({"crop", std::vector<double>(kMicroRegionsPerPage + 1, 0.0)});
    t.push_back({"answer", std::vector<double>(2, 0.0)});
    p.tables.push_back(std::move(t));
  }
  return p;
}

ToyPolicy ToyPolicy::oracle(const MicroWorld& world, const Retriever& retriever, std::size_t k, double strength,
                            double temperature) {
  ToyPolicy p = uniform(world, k, temperature);
  for (std::size_t q = 0; q < world.queries.size(); ++q) {
    const auto& task = world.tasks[q];
    const auto& golden = world.queries[q].golden_doc_ids;
    auto& t = p.tables[q];
    t[kStyle].logits[0] += strength;
    t[kSearch].logits[0] += strength;
    for (std::size_t s = 0; s < kMicroSearchTemplates; ++s) {
      auto found = retriever.search(task.search_templates[s], k);
      std::size_t best = 0;
      for (std::size_t i = 0; i < found.size(); ++i) {
        if (golden.contains(found.entries[i].doc_id)) {
          best = i;
          break;
        }
      }
      t[kFirstSelect + s].logits[best] += strength;
    }
    t[crop_table()].logits[task.needs_crop ? task.golden_region + 1 : 0] += strength;
    t[answer_table()].logits[0] += strength;
  }
  return p;
}

std::vector<double> ToyPolicy::probabilities(std::size_t query, std::size_t table) const {
  return softmax(tables.at(query).at(table).logits, temperature);
}

bool ToyPolicy::all_finite() const {
  for (const auto& q : tables) {
    for (const auto& t : q) {
      for (double v : t.logits) {
        if (!std::isfinite(v)) return false;
      }
    }
  }
  return true;
}

nlohmann::json ToyPolicy::to_json() const {
  nlohmann::json qs = nlohmann::json::array();
  for (const auto& q : tables) {
    nlohmann::json ts = nlohmann::json::array();
    for (const auto& t : q) ts.push_back({{"name", t.name}, {"logits", t.logits}});
    qs.push_back(std::move(ts));
  }
  return {{"temperature", temperature}, {"tables", std::move(qs)}};
}

ToyPolicy ToyPolicy::from_json(const nlohmann::json& j) {
  ToyPolicy p;
  p.temperature = j.at("temperature").get<double>();
  for (const auto& q : j.at("tables")) {
    std::vector<DecisionTable> ts;
    for (const auto& t : q) ts.push_back({t.at("name").get<std::string>(), t.at("logits").get<std::vector<double>>()});
    p.tables.push_back(std::move(ts));
  }
  return p;
}

double policy_kl(const ToyPolicy& p, const ToyPolicy& ref) {
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t q = 0; q < p.tables.size(); ++q) {
    for (std::size_t t = 0; t < p.tables[q].size(); ++t) {
      auto a = p.probabilities(q, t);
      auto b = ref.probabilities(q, t);
      double kl = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > 0.0) kl += a[i] * std::log(a[i] / b[i]);
      }
      total += kl;
      ++n;
    }
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

ToyAgent::ToyAgent(const MicroWorld& world, const ToyPolicy& policy, std::size_t query_index, Rng* rng)
    : world_(world), policy_(policy), query_(query_index), rng_(rng) {}

std::size_t ToyAgent::choose(std::size_t table) {
  auto probs = policy_.probabilities(query_, table);
  std::size_t pick = 0;
  if (rng_) {
    double u = rng_->uniform();
    double acc = 0.0;
    pick = probs.size() - 1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
  } else {
    pick = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
  }
  decisions_.push_back({table, pick});
  return pick;
}

std::string ToyAgent::emit(const ActionRecord& action) const {
  if (!think_) return serialize_action(action);
  return serialize_turn("stage " + std::to_string(stage_), action);
}

std::string ToyAgent::generate(std::span<const Turn> history) {
  const auto& task = world_.tasks.at(query_);
  if (stage_ == 0) {
    think_ = choose(ToyPolicy::kStyle) == 0;
    template_ = choose(ToyPolicy::kSearch);
    auto out = emit(ActionRecord::search(task.search_templates[template_]));
    stage_ = 1;
    return out;
  }
  if (stage_ == 1) {
    auto listed = listed_candidates(history);
    std::size_t idx = choose(ToyPolicy::kFirstSelect + template_);
    if (idx < listed.size()) selected_ = listed[idx];
    auto out = emit(ActionRecord::select({idx}));
    stage_ = 2;
    return out;
  }
  if (stage_ == 2) {
    stage_ = 3;
    if (selected_) {
      std::size_t c = choose(ToyPolicy::crop_table());
      const auto& regions = world_.layout.at(*selected_);
      if (c > 0 && c - 1 < regions.size()) {
        crop_ = regions[c - 1].box;
        return emit(ActionRecord::crop({*crop_}));
      }
    }
  }
  std::size_t a = choose(ToyPolicy::answer_table());
  std::string text = (a == 0 && selected_) ? read_evidence(world_, query_, *selected_, crop_) : "unknown";
  stage_ = 4;
  return emit(ActionRecord::answer(text));
}

nlohmann::json IterationMetrics::to_json() const {
  return {{"iteration", iteration},         {"mean_total", mean_total}, {"mean_r_pat", r_pat},
          {"mean_r_ir", r_ir},              {"mean_r_sel", r_sel},      {"mean_r_crop", r_crop},
          {"mean_r_ans", r_ans},            {"selection_accuracy", selection_accuracy}};
}

double TrainingReport::initial_mean() const { return iterations.empty() ? 0.0 : iterations.front().mean_total; }

double TrainingReport::final_mean(std::size_t window) const {
  if (iterations.empty()) return 0.0;
  window = std::clamp<std::size_t>(window, 1, iterations.size());
  double s = 0.0;
  for (std::size_t i = iterations.size() - window; i < iterations.size(); ++i) s += iterations[i].mean_total;
  return s / static_cast<double>(window);
}

namespace {

class MetricsAccumulator {
 public:
  void add(const Trajectory& t) {
    const auto& r = *t.reward;
    sum_.mean_total += r.total;
    sum_.r_pat += r.r_pat;
    sum_.r_ir += r.r_ir;
    sum_.r_sel += r.r_sel;
    sum_.r_crop += r.r_crop;
    sum_.r_ans += r.r_ans;
    for (const auto& s : t.selected_history) {
      if (s.doc_ids.empty()) continue;
      std::size_t hits = 0;
      for (const auto& d : s.doc_ids) hits += t.query.golden_doc_ids.contains(d) ? 1 : 0;
      sel_sum_ += static_cast<double>(hits) / static_cast<double>(s.doc_ids.size());
      ++sel_n_;
    }
    ++n_;
  }

  IterationMetrics finish(std::size_t iteration) const {
    IterationMetrics m = sum_;
    m.iteration = iteration;
    double n = n_ ? static_cast<double>(n_) : 1.0;
    m.mean_total /= n;
    m.r_pat /= n;
    m.r_ir /= n;
    m.r_sel /= n;
    m.r_crop /= n;
    m.r_ans /= n;
    m.selection_accuracy = sel_n_ ? sel_sum_ / static_cast<double>(sel_n_) : 0.0;
    return m;
  }

 private:
  IterationMetrics sum_;
  double sel_sum_ = 0.0;
  std::size_t sel_n_ = 0;
  std::size_t n_ = 0;
};

Trajectory sample_rollout(const MicroWorld& world, const ToyPolicy& policy, std::size_t q, Rng* rng,
                          const Retriever& retriever, const Judge& judge, const ToyTrainConfig& cfg,
                          std::vector<Decision>* decisions, const std::string& id) {
  ToyAgent agent(world, policy, q, rng);
  RolloutOptions opts;
  opts.trajectory_id = id;
  Trajectory t = run_rollout(agent, world.queries[q], world.corpus, retriever, cfg.session, opts);
  t.reward = score_trajectory(t, judge, cfg.weights);
  if (decisions) *decisions = agent.decisions();
  return t;
}

void check_config(const ToyTrainConfig& cfg) {
  if (cfg.group_size < 2) throw InvalidArgument("group_size must be >= 2");
  if (!std::isfinite(cfg.lr) || cfg.lr < 0.0) throw InvalidArgument("lr must be finite and non-negative");
  if (!std::isfinite(cfg.kl_coeff) || cfg.kl_coeff < 0.0) throw InvalidArgument("kl_coeff must be non-negative");
  cfg.weights.validate();
  cfg.session.validate();
}

}  // namespace

TrainingReport toy_train(const MicroWorld& world, ToyPolicy policy, const ToyTrainConfig& cfg) {
  check_config(cfg);
  if (policy.tables.size() != world.queries.size()) throw InvalidArgument("policy does not match the world");
  const ToyPolicy initial = policy;
  const double tau = policy.temperature;
  HashedTfRetriever retriever(world.corpus);
  NormalizedMatchJudge judge;
  Rng rng(cfg.seed);
  TrainingReport report;

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    MetricsAccumulator acc;
    auto grads = policy.tables;
    for (auto& q : grads) {
      for (auto& t : q) std::fill(t.logits.begin(), t.logits.end(), 0.0);
    }

    for (std::size_t q = 0; q < world.queries.size(); ++q) {
      std::vector<double> rewards(cfg.group_size);
      std::vector<std::vector<Decision>> logs(cfg.group_size);
      for (std::size_t g = 0; g < cfg.group_size; ++g) {
        auto t = sample_rollout(world, policy, q, &rng, retriever, judge, cfg, &logs[g], world.queries[q].id);
        rewards[g] = t.reward->total;
        acc.add(t);
      }
      auto adv = group_advantages(rewards);
      for (std::size_t g = 0; g < cfg.group_size; ++g) {
        if (adv[g] == 0.0) continue;
        for (const auto& d : logs[g]) {
          auto probs = policy.probabilities(q, d.table);
          auto& grad = grads[q][d.table].logits;
          for (std::size_t j = 0; j < probs.size(); ++j) {
            double indicator = j == d.option ? 1.0 : 0.0;
            grad[j] += adv[g] * (indicator - probs[j]) / tau / static_cast<double>(cfg.group_size);
          }
        }
      }
    }

    for (std::size_t q = 0; q < policy.tables.size(); ++q) {
      for (std::size_t t = 0; t < policy.tables[q].size(); ++t) {
        auto& logits = policy.tables[q][t].logits;
        for (std::size_t j = 0; j < logits.size(); ++j) logits[j] += cfg.lr * grads[q][t].logits[j];
        if (cfg.kl_coeff == 0.0 || cfg.lr == 0.0) continue;
        // d/dtheta KL(pi || pi0) = pi_j (log pi_j - log pi0_j - KL) / tau
        auto p = policy.probabilities(q, t);
        auto p0 = initial.probabilities(q, t);
        double kl = 0.0;
        for (std::size_t j = 0; j < p.size(); ++j) {
          if (p[j] > 0.0) kl += p[j] * std::log(p[j] / p0[j]);
        }
        for (std::size_t j = 0; j < p.size(); ++j) {
          if (p[j] > 0.0) logits[j] -= cfg.lr * cfg.kl_coeff * p[j] * (std::log(p[j] / p0[j]) - kl) / tau;
        }
      }
    }
    if (!policy.all_finite()) {
      throw TrainingDivergence("non-finite logits after iteration " + std::to_string(it) +
                               " (lr=" + std::to_string(cfg.lr) + ", kl_coeff=" + std::to_string(cfg.kl_coeff) + ")");
    }
    report.iterations.push_back(acc.finish(it));
  }
  report.final_policy = std::move(policy);
  return report;
}

EvalReport evaluate_toy(const MicroWorld& world, const ToyPolicy& policy, std::size_t rollouts_per_query,
                        std::uint64_t seed, const ToyTrainConfig& cfg, bool greedy) {
  cfg.weights.validate();
  cfg.session.validate();
  HashedTfRetriever retriever(world.corpus);
  NormalizedMatchJudge judge;
  Rng rng(seed);
  EvalReport out;
  MetricsAccumulator acc;
  for (std::size_t q = 0; q < world.queries.size(); ++q) {
    for (std::size_t r = 0; r < rollouts_per_query; ++r) {
      auto id = world.queries[q].id + "-" + std::to_string(r);
      auto t = sample_rollout(world, policy, q, greedy ? nullptr : &rng, retriever, judge, cfg, nullptr, id);
      acc.add(t);
      out.trajectories.push_back(std::move(t));
    }
  }
  out.metrics = acc.finish(0);
  return out;
}

}  // namespace docrag
