// docrag command line: corpus ingest, rollouts, scoring, toy training,
// curation stages, trajectory statistics and the session service.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "docrag/curation.hpp"
#include "docrag/errors.hpp"
#include "docrag/harness.hpp"
#include "docrag/micro_world.hpp"
#include "docrag/raster.hpp"
#include "docrag/remote.hpp"
#include "docrag/retrieval.hpp"
#include "docrag/serialization.hpp"
#include "docrag/service.hpp"
#include "docrag/toy_policy.hpp"

extern char** environ;

using namespace docrag;
using nlohmann::json;

namespace {

const std::vector<std::string> kCommands{"ingest", "rollout", "score", "train-toy", "curate", "stats", "serve"};

/// Config file (--config or DOCRAG_CONFIG), then DOCRAG_* variables, then the
/// options actually given on the command line.
Config resolve_config(const CLI::App& app, const CLI::App& sub) {
  Config cfg;
  std::string file;
  if (auto* opt = app.get_option_no_throw("--config"); opt && opt->count()) {
    file = opt->as<std::string>();
  } else if (const char* env = std::getenv("DOCRAG_CONFIG")) {
    file = env;
  }
  if (!file.empty()) cfg.merge_file(file);
  cfg.merge_environment(environ);
  for (const auto* opt : sub.get_options()) {
    if (!opt->count() || opt->get_name() == "--help") continue;
    auto key = opt->get_single_name();
    for (auto& c : key) c = c == '-' ? '_' : c;
    cfg.set(key, opt->get_type_size() == 0 ? "true" : opt->as<std::string>());
  }
  return cfg;
}

std::string require(const Config& cfg, const std::string& key) {
  auto v = cfg.get(key);
  if (!v || v->empty()) throw InvalidArgument("missing required setting: " + key);
  return *v;
}

std::vector<Trajectory> load_trajectories(const std::string& path) { return TrajectoryStore(path).load(); }

std::unique_ptr<Judge> make_judge(const Config& cfg) {
  if (auto url = cfg.get("judge_url"); url && !url->empty()) {
    return std::make_unique<RemoteJudge>(Endpoint::parse(*url), cfg.get_size("workers").value_or(4));
  }
  return std::make_unique<NormalizedMatchJudge>();
}

std::map<std::string, std::vector<std::string>> load_scripts(const std::string& path) {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& j : read_jsonl(path)) {
    out[j.at("query_id").get<std::string>()] = j.at("turns").get<std::vector<std::string>>();
  }
  return out;
}

Corpus with_pixels(const Corpus& corpus) {
  auto pages = corpus.pages();
  for (auto& p : pages) {
    if (!p.raster && !p.image_path.empty()) p.raster = std::make_shared<const Raster>(read_ppm(p.image_path));
  }
  return Corpus(std::move(pages));
}

ImageWire wire_from(const Config& cfg) {
  auto w = cfg.get_or("wire", "base64");
  if (w == "base64") return ImageWire::Base64;
  if (w == "file_url") return ImageWire::FileUrl;
  throw InvalidArgument("wire must be base64 or file_url");
}

ToyTrainConfig toy_config_from(const Config& cfg) {
  ToyTrainConfig tc;
  tc.seed = cfg.get_size("seed").value_or(7);
  tc.iterations = cfg.get_size("iters").value_or(tc.iterations);
  tc.group_size = cfg.get_size("group_size").value_or(tc.group_size);
  tc.lr = cfg.get_double("lr").value_or(tc.lr);
  tc.kl_coeff = cfg.get_double("kl_coeff").value_or(tc.kl_coeff);
  tc.weights = weights_from(cfg);
  tc.session = session_config_from(cfg);
  return tc;
}

MicroWorld world_from(const Config& cfg) {
  return generate_micro_world(cfg.get_size("world_seed").value_or(7), cfg.get_size("docs").value_or(20),
                              cfg.get_size("world_queries").value_or(10));
}

int cmd_ingest(const Config& cfg) {
  auto corpus = ingest_corpus(require(cfg, "manifest"));
  std::size_t with_pixels = 0;
  for (const auto& p : corpus.pages()) with_pixels += p.has_pixels();
  std::cout << json{{"pages", corpus.size()}, {"with_pixels", with_pixels}}.dump() << "\n";
  return 0;
}

int cmd_rollout(const Config& cfg) {
  auto session = session_config_from(cfg);
  auto policy_kind = require(cfg, "policy");
  auto out = require(cfg, "out");
  bool score = cfg.get("score").has_value();
  auto judge = make_judge(cfg);
  auto weights = weights_from(cfg);
  TrajectoryStore store(out);
  std::size_t written = 0;

  auto finish = [&](Trajectory t) {
    if (score) t.reward = score_trajectory(t, *judge, weights);
    store.append(std::span<const Trajectory>(&t, 1));
    ++written;
  };

  if (policy_kind == "toy") {
    auto world = world_from(cfg);
    HashedTfRetriever retriever(world.corpus);
    ToyPolicy policy = cfg.get("toy_policy")
                           ? ToyPolicy::from_json(json::parse(std::ifstream(*cfg.get("toy_policy"))))
                           : ToyPolicy::uniform(world, session.k);
    Rng rng(cfg.get_size("seed").value_or(0));
    bool greedy = cfg.get("greedy").has_value();
    for (std::size_t qi = 0; qi < world.queries.size(); ++qi) {
      ToyAgent agent(world, policy, qi, greedy ? nullptr : &rng);
      finish(run_rollout(agent, world.queries[qi], world.corpus, retriever, session, {world.queries[qi].id, nullptr}));
    }
  } else {
    auto corpus = ingest_corpus(require(cfg, "corpus"));
    auto queries = load_queries(require(cfg, "queries"));
    HashedTfRetriever local(corpus);
    std::unique_ptr<Retriever> remote;
    if (auto url = cfg.get("retriever_url")) remote = std::make_unique<RemoteRetriever>(Endpoint::parse(*url), corpus);
    const Retriever& retriever = remote ? *remote : static_cast<const Retriever&>(local);

    std::map<std::string, std::vector<std::string>> scripts;
    if (policy_kind == "scripted") {
      scripts = load_scripts(require(cfg, "script"));
    } else if (policy_kind != "remote") {
      throw InvalidArgument("policy must be scripted, toy or remote");
    }
    for (const auto& q : queries) {
      std::unique_ptr<Policy> policy;
      if (policy_kind == "scripted") {
        auto it = scripts.find(q.id);
        if (it == scripts.end()) throw InvalidArgument("no script for query " + q.id);
        policy = std::make_unique<ScriptedPolicy>(it->second);
      } else {
        policy = std::make_unique<RemotePolicy>(Endpoint::parse(require(cfg, "policy_url")),
                                                cfg.get_or("model", "default"),
                                                cfg.get_double("temperature").value_or(0.0),
                                                session.max_response_chars);
      }
      finish(run_rollout(*policy, q, corpus, retriever, session, {q.id, nullptr}));
    }
  }
  std::cout << json{{"trajectories", written}, {"out", out}}.dump() << "\n";
  return 0;
}

int cmd_score(const Config& cfg) {
  auto trajectories = load_trajectories(require(cfg, "trajectories"));
  auto weights = weights_from(cfg);
  auto judge = make_judge(cfg);
  for (auto& t : trajectories) {
    t.reward = score_trajectory(t, *judge, weights);
    std::cout << json{{"id", t.id}, {"reward", to_json(*t.reward)}}.dump() << "\n";
  }
  if (auto out = cfg.get("out")) TrajectoryStore(*out).append(trajectories);
  return 0;
}

int cmd_train_toy(const Config& cfg) {
  auto world = world_from(cfg);
  auto tc = toy_config_from(cfg);
  auto report = toy_train(world, ToyPolicy::uniform(world, tc.session.k), tc);
  if (auto path = cfg.get("metrics")) {
    std::vector<json> rows;
    for (const auto& m : report.iterations) rows.push_back(m.to_json());
    write_jsonl(*path, rows);
  }
  if (auto path = cfg.get("policy_out")) {
    std::ofstream out(*path);
    if (!out) throw IoError("cannot write " + *path);
    out << report.final_policy.to_json().dump() << "\n";
  }
  std::cout << json{{"iterations", report.iterations.size()},
                    {"initial_mean", report.initial_mean()},
                    {"final_mean", report.final_mean()}}
                   .dump()
            << "\n";
  return 0;
}

std::vector<SynthesisRecord> load_records(const std::string& path) {
  std::vector<SynthesisRecord> out;
  for (const auto& j : read_jsonl(path)) out.push_back(synthesis_record_from_json(j));
  return out;
}

void write_records(const std::string& path, std::span<const SynthesisRecord> records) {
  std::vector<json> rows;
  for (const auto& r : records) rows.push_back(to_json(r));
  write_jsonl(path, rows);
}

int cmd_curate(const Config& cfg) {
  auto stage = require(cfg, "stage");
  auto records = load_records(require(cfg, "in"));
  if (auto extra = cfg.get("include_discarded")) records = prioritize_discarded(records, load_records(*extra));
  auto judge = make_judge(cfg);
  auto workers = cfg.get_size("workers").value_or(1);

  StageResult result;
  if (stage == "quality") {
    result = quality_filter(records, *judge, workers);
  } else if (stage == "difficulty" || stage == "rl") {
    auto corpus = ingest_corpus(require(cfg, "corpus"));
    HashedTfRetriever retriever(corpus);
    CurationContext ctx{corpus, retriever, session_config_from(cfg), workers};
    auto policy_kind = require(cfg, "policy");
    PolicyFactory factory;
    if (policy_kind == "scripted") {
      auto scripts = std::make_shared<std::map<std::string, std::vector<std::string>>>(load_scripts(require(cfg, "script")));
      factory = [scripts](const Query& q, double, std::uint64_t) -> std::unique_ptr<Policy> {
        auto it = scripts->find(q.id);
        return std::make_unique<ScriptedPolicy>(it == scripts->end() ? std::vector<std::string>{} : it->second);
      };
    } else if (policy_kind == "remote") {
      auto ep = Endpoint::parse(require(cfg, "policy_url"));
      auto model = cfg.get_or("model", "default");
      factory = [ep, model](const Query&, double temperature, std::uint64_t) -> std::unique_ptr<Policy> {
        return std::make_unique<RemotePolicy>(ep, model, temperature);
      };
    } else {
      throw InvalidArgument("curation policy must be scripted or remote");
    }
    if (stage == "difficulty") {
      result = difficulty_filter(records, factory, *judge, ctx);
    } else {
      result = rl_curation(records, factory, cfg.get_size("rollouts").value_or(5),
                           cfg.get_double("temperature").value_or(1.0), *judge, ctx);
    }
  } else {
    throw InvalidArgument("stage must be quality, difficulty or rl");
  }

  write_records(require(cfg, "out"), result.kept);
  if (auto path = cfg.get("discarded_out")) write_records(*path, result.discarded);
  auto retry = cfg.get_or("retry_queue", require(cfg, "out") + ".retry.jsonl");
  if (!result.deferred.empty()) {
    std::vector<json> rows;
    for (const auto& r : result.deferred) rows.push_back(to_json(r));
    append_jsonl(retry, rows);
  }
  std::cout << result.report().dump() << "\n";
  return 0;
}

int cmd_stats(const Config& cfg) {
  auto trajectories = load_trajectories(require(cfg, "trajectories"));
  std::cout << compute_stats(trajectories).to_json().dump(2) << "\n";
  return 0;
}

ServiceServer* g_server = nullptr;

int cmd_serve(const Config& cfg) {
  auto wire = wire_from(cfg);
  auto corpus = ingest_corpus(require(cfg, "corpus"));
  if (wire == ImageWire::Base64) corpus = with_pixels(corpus);
  std::vector<Query> queries;
  if (auto path = cfg.get("queries")) queries = load_queries(*path);
  HashedTfRetriever retriever(corpus);
  auto judge = make_judge(cfg);
  ServiceConfig sc;
  sc.session = session_config_from(cfg);
  sc.weights = weights_from(cfg);
  sc.wire = wire;
  SessionService service(corpus, retriever, std::move(queries), *judge, sc);
  ServiceServer server(service);
  auto host = cfg.get_or("host", "127.0.0.1");
  int port = server.bind(host, static_cast<int>(cfg.get_size("port").value_or(8080)));
  std::cout << json{{"listening", host + ":" + std::to_string(port)}}.dump() << std::endl;
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  server.run();
  g_server = nullptr;
  return 0;
}

void add_session_options(CLI::App* sub) {
  sub->add_option("--t-max", "Step budget per episode");
  sub->add_option("--k", "Retrieval depth");
  sub->add_option("--max-prompt-chars", "Prompt history bound");
  sub->add_option("--max-response-chars", "Assistant response bound");
  sub->add_option("--interpolation", "nearest or bilinear");
  sub->add_option("--prompt-template", "Instruction template file with a {question} slot");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"docrag: document-RAG agent environment and reward engine", "docrag"};
  app.add_option("--config", "key = value settings file");
  app.require_subcommand(1);

  auto* ingest = app.add_subcommand("ingest", "Validate a corpus manifest");
  ingest->add_option("manifest", "JSONL manifest")->required();

  auto* rollout = app.add_subcommand("rollout", "Run episodes and write trajectories");
  rollout->add_option("--policy", "scripted, toy or remote")->required();
  rollout->add_option("--queries", "Query manifest (scripted, remote)");
  rollout->add_option("--corpus", "Corpus manifest (scripted, remote)");
  rollout->add_option("--script", "JSONL of {query_id, turns} for the scripted policy");
  rollout->add_option("--policy-url", "Chat-completion endpoint for the remote policy");
  rollout->add_option("--retriever-url", "Remote retrieval endpoint");
  rollout->add_option("--judge-url", "Remote judge endpoint");
  rollout->add_option("--model", "Model name sent to the remote policy");
  rollout->add_option("--temperature", "Sampling temperature for the remote policy");
  rollout->add_option("--toy-policy", "Trained toy policy JSON (toy)");
  rollout->add_option("--world-seed", "Micro-world seed (toy)");
  rollout->add_option("--docs", "Micro-world documents (toy)");
  rollout->add_option("--world-queries", "Micro-world queries (toy)");
  rollout->add_option("--seed", "Sampling seed (toy)");
  rollout->add_flag("--greedy", "Argmax decisions (toy)");
  rollout->add_flag("--score", "Attach reward breakdowns");
  rollout->add_option("--weights", "l1,l2,l3,l4,l5");
  rollout->add_option("--out", "Trajectory JSONL to append to")->required();
  add_session_options(rollout);

  auto* score = app.add_subcommand("score", "Score trajectories");
  score->add_option("trajectories", "Trajectory JSONL")->required();
  score->add_option("--weights", "l1,l2,l3,l4,l5");
  score->add_option("--judge-url", "Remote judge endpoint");
  score->add_option("--out", "Append scored trajectories here");

  auto* train = app.add_subcommand("train-toy", "Train the toy policy on a micro-world");
  train->add_option("--seed", "Sampling seed");
  train->add_option("--iters", "Iterations");
  train->add_option("--lr", "Learning rate");
  train->add_option("--kl-coeff", "KL pull toward the initial policy");
  train->add_option("--group-size", "Rollouts per query per iteration");
  train->add_option("--world-seed", "Micro-world seed");
  train->add_option("--docs", "Micro-world documents");
  train->add_option("--world-queries", "Micro-world queries");
  train->add_option("--weights", "l1,l2,l3,l4,l5");
  train->add_option("--metrics", "Per-iteration metrics JSONL");
  train->add_option("--policy-out", "Final policy JSON");
  add_session_options(train);

  auto* curate = app.add_subcommand("curate", "Run one curation stage over synthesis records");
  curate->add_option("--stage", "quality, difficulty or rl")->required();
  curate->add_option("--in", "SynthesisRecord JSONL")->required();
  curate->add_option("--out", "Kept records JSONL")->required();
  curate->add_option("--discarded-out", "Discarded records JSONL");
  curate->add_option("--retry-queue", "Deferred records are appended here");
  curate->add_option("--include-discarded", "Earlier discarded records, processed first");
  curate->add_option("--corpus", "Corpus manifest (difficulty, rl)");
  curate->add_option("--policy", "scripted or remote (difficulty, rl)");
  curate->add_option("--script", "JSONL of {query_id, turns}");
  curate->add_option("--policy-url", "Chat-completion endpoint");
  curate->add_option("--model", "Model name for the remote policy");
  curate->add_option("--judge-url", "Remote judge endpoint");
  curate->add_option("--rollouts", "Rollouts per query (rl)");
  curate->add_option("--temperature", "Sampling temperature (rl)");
  curate->add_option("--workers", "Records processed concurrently");
  add_session_options(curate);

  auto* stats = app.add_subcommand("stats", "Recall, crop frequency and reward means");
  stats->add_option("trajectories", "Trajectory JSONL")->required();

  auto* serve = app.add_subcommand("serve", "Run the session HTTP service");
  serve->add_option("--corpus", "Corpus manifest");
  serve->add_option("--queries", "Query manifest for query_id lookups");
  serve->add_option("--host", "Bind address");
  serve->add_option("--port", "Port (0 picks a free one)");
  serve->add_option("--wire", "base64 or file_url");
  serve->add_option("--weights", "l1,l2,l3,l4,l5");
  serve->add_option("--judge-url", "Remote judge endpoint");
  add_session_options(serve);

  // Unknown subcommands get the usage text and exit status 2.
  for (int i = 1; i < argc; ++i) {
    std::string_view a = argv[i];
    if (a == "--config") {
      ++i;
      continue;
    }
    if (a.starts_with("-")) continue;
    if (std::find(kCommands.begin(), kCommands.end(), a) == kCommands.end()) {
      std::cerr << "unknown command: " << a << "\n\n" << app.help();
      return 2;
    }
    break;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    if (app.get_subcommands().empty()) std::cerr << "\n" << app.help();
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    Config cfg = resolve_config(app, *sub);
    auto name = sub->get_name();
    if (name == "ingest") return cmd_ingest(cfg);
    if (name == "rollout") return cmd_rollout(cfg);
    if (name == "score") return cmd_score(cfg);
    if (name == "train-toy") return cmd_train_toy(cfg);
    if (name == "curate") return cmd_curate(cfg);
    if (name == "stats") return cmd_stats(cfg);
    if (name == "serve") return cmd_serve(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
