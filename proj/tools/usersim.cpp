// usersim command-line entry point.
//
// Exit codes: 0 success, 1 runtime failure, 2 bad configuration or input.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "usersim/usersim.hpp"

namespace fs = std::filesystem;
using namespace usersim;

namespace {

#ifdef USERSIM_DATA_DIR
const std::string kDataDir = USERSIM_DATA_DIR;
#else
const std::string kDataDir = "data";
#endif

struct Common {
  std::string ontology = kDataDir + "/ontologies/multiwoz.json";
  std::string templates = kDataDir + "/templates/templates.json";
  std::uint64_t seed = 1;
  std::string out_dir = ".";
};

struct SimOptions {
  std::size_t n = 100;
  int max_turns = 40;
  std::size_t max_actions = 5;
  std::string generator = "rule";
  double p_u = 1.0;
  double failure_rate = 0.0;
  int request_depth = 1;
  bool keyword_nlu = false;
  double timeout_s = 30;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--ontology", c.ontology, "Ontology JSON file")->check(CLI::ExistingFile);
  sub->add_option("--templates", c.templates, "Template table JSON file")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "Master seed");
  sub->add_option("--out-dir", c.out_dir, "Directory for artifacts")->envname("USERSIM_OUT_DIR");
}

void add_sim(CLI::App* sub, SimOptions& s) {
  sub->add_option("-n,--dialogues", s.n, "Number of dialogues");
  sub->add_option("--max-turns", s.max_turns, "Turn cap per dialogue")->check(CLI::PositiveNumber);
  sub->add_option("--max-actions", s.max_actions, "Action budget per user turn")->check(CLI::PositiveNumber);
  sub->add_option("--generator", s.generator, "rule | stochastic[:checkpoint] | external:<stdio:cmd | tcp:host:port>");
  sub->add_option("--p-u", s.p_u, "Scripted system understanding probability")->check(CLI::Range(0.0, 1.0));
  sub->add_option("--failure-rate", s.failure_rate, "Scripted system failure injection rate")->check(CLI::Range(0.0, 1.0));
  sub->add_option("--request-depth", s.request_depth, "System requests per domain")->check(CLI::NonNegativeNumber);
  sub->add_flag("--keyword-nlu", s.keyword_nlu, "System understands the user's text by keyword spotting");
  sub->add_option("--timeout", s.timeout_s, "External generator timeout in seconds")->check(CLI::PositiveNumber);
}

/// Hash of every effective option value of the subcommand, excluding where outputs go.
std::string config_hash(const CLI::App* sub) {
  Json j = Json::object();
  for (const auto* opt : sub->get_options()) {
    const auto name = opt->get_name();
    if (name == "--help" || name == "--out-dir" || name == "--config" || name.empty()) continue;
    if (opt->count() > 0) {
      j[name] = opt->results();
    } else {
      j[name] = opt->get_default_str();
    }
  }
  j["@command"] = sub->get_name();
  return detail::hex64(detail::fnv1a(j.dump()));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_file(const std::string& dir, const std::string& name, const std::string& content) {
  fs::create_directories(dir);
  fs::path p = fs::path(dir) / name;
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  out << content;
  return p;
}

std::string tsv_header(const ArtifactStamp& s) {
  return "# config_hash=" + s.config_hash + " seed=" + std::to_string(s.seed) + " version=" + std::string(kVersion) + "\n";
}

Json with_meta(Json body, const ArtifactStamp& s) {
  body["meta"] = meta_json(s)["meta"];
  return body;
}

PolicyParameters load_policy(const std::string& path) {
  auto j = detail::parse_json(read_file(path), "policy checkpoint");
  return policy_from_json(j.contains("policy") ? j.at("policy") : j);
}

std::unique_ptr<Generator> make_generator(const std::string& spec, const Ontology& o, const TemplateTable& t,
                                          const SimOptions& s) {
  if (spec == "rule") return std::make_unique<RuleGenerator>(o, t);
  if (spec == "rule-terse") return std::make_unique<RuleGenerator>(o, t, ActionCountDist{{1, 1.0}});
  if (spec == "stochastic") return std::make_unique<StochasticGenerator>(o, t, PolicyParameters::initial());
  if (spec.rfind("stochastic:", 0) == 0)
    return std::make_unique<StochasticGenerator>(o, t, load_policy(spec.substr(11)));
  if (spec.rfind("external:", 0) == 0) {
    ExternalOptions eo;
    eo.timeout = std::chrono::milliseconds(static_cast<long>(s.timeout_s * 1000));
    return std::make_unique<ExternalGenerator>(o, t, make_transport(spec.substr(9)), eo);
  }
  throw ValidationError("unknown generator '" + spec + "'");
}

DialogueConfig dialogue_config(const SimOptions& s) {
  DialogueConfig d;
  d.max_turns = s.max_turns;
  d.graph.max_actions = s.max_actions;
  return d;
}

ScriptedSystemConfig system_config(const SimOptions& s) {
  ScriptedSystemConfig c;
  c.p_u = s.p_u;
  c.failure_rate = s.failure_rate;
  c.request_depth = s.request_depth;
  c.keyword_nlu = s.keyword_nlu;
  return c;
}

std::vector<std::uint64_t> parse_seeds(const std::vector<std::uint64_t>& given, std::uint64_t fallback) {
  return given.empty() ? std::vector<std::uint64_t>{fallback} : given;
}

std::pair<std::string, std::string> split_named(const std::string& s) {
  auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("expected NAME=VALUE, got '" + s + "'");
  return {s.substr(0, eq), s.substr(eq + 1)};
}

std::vector<NlgSample> user_samples(const DialogueCorpus& corpus) {
  std::vector<NlgSample> out;
  for (const auto& d : corpus) {
    std::vector<std::string> goal_values;
    for (const auto& e : d.goal.entries())
      if (e.kind != Kind::reqt) goal_values.push_back(e.value);
    for (const auto& t : d.turns)
      if (t.speaker == Speaker::usr) out.push_back({t.action, t.text, goal_values});
  }
  return out;
}

/// CLI11 reads config files only at the root, so "--config" may appear anywhere on the line.
std::vector<std::string> hoist_config(int argc, char** argv) {
  std::vector<std::string> rest, config;
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) {
      config = {a, argv[++i]};
    } else if (a.rfind("--config=", 0) == 0) {
      config = {a};
    } else {
      rest.push_back(a);
    }
  }
  rest.insert(rest.begin(), config.begin(), config.end());
  std::reverse(rest.begin(), rest.end());  // CLI11 takes the vector form in reverse order
  return rest;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"usersim: goal-driven user simulation with constrained action decoding"};
  app.set_config("--config", "", "TOML config file with one [subcommand] table; flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  std::string version_str(kVersion);
  app.set_version_flag("--version", version_str);

  Common c;
  SimOptions s;

  // ontology-validate
  auto* validate = app.add_subcommand("ontology-validate", "Load and validate an ontology file");
  std::string validate_path;
  validate->add_option("path", validate_path, "Ontology JSON file")->required();

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Run user/system dialogues and log transcripts");
  add_common(simulate, c);
  add_sim(simulate, s);

  // make-corpus
  auto* make_corpus = app.add_subcommand("make-corpus", "Simulate dialogues and write them as a corpus");
  add_common(make_corpus, c);
  add_sim(make_corpus, s);
  std::string corpus_name = "corpus.jsonl";
  make_corpus->add_option("--name", corpus_name, "Output file name");

  // make-pairs
  auto* make_pairs = app.add_subcommand("make-pairs", "Build supervised (input, output) pairs from a corpus");
  add_common(make_pairs, c);
  std::string corpus_path, features = "full";
  make_pairs->add_option("--corpus", corpus_path, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  make_pairs->add_option("--features", features, "full | no_history | no_goal_no_history");

  // train-user
  auto* train_user = app.add_subcommand("train-user", "Train the stochastic user policy with PPO");
  add_common(train_user, c);
  add_sim(train_user, s);
  std::string reward_name = "r2", init_path;
  int epochs = 100;
  PPOConfig ppo;
  train_user->add_option("--reward", reward_name, "r1 | r1_prose | r2");
  train_user->add_option("--epochs", epochs, "Collect/update iterations")->check(CLI::NonNegativeNumber);
  train_user->add_option("--episodes", ppo.episodes, "Dialogues per batch")->check(CLI::PositiveNumber);
  train_user->add_option("--lr", ppo.learning_rate, "Learning rate");
  train_user->add_option("--clip", ppo.clip, "PPO clip range");
  train_user->add_option("--gamma", ppo.gamma, "Discount");
  train_user->add_option("--entropy", ppo.entropy_coef, "Entropy bonus coefficient");
  train_user->add_option("--init", init_path, "Initial checkpoint")->check(CLI::ExistingFile);

  // cross-reward
  auto* cross_reward = app.add_subcommand("cross-reward", "Cross-reward evaluation table");
  add_common(cross_reward, c);
  add_sim(cross_reward, s);
  std::vector<std::string> policy_specs;
  std::vector<std::uint64_t> train_seeds{1, 2, 3, 4}, eval_seeds;
  int cr_epochs = 100;
  bool no_rule_row = false;
  cross_reward->add_option("--policy", policy_specs, "NAME=checkpoint (repeatable); default trains User 1 on r1 and User 2 on r2");
  cross_reward->add_option("--train-seeds", train_seeds, "Training seeds when no --policy is given");
  cross_reward->add_option("--epochs", cr_epochs, "Training epochs when no --policy is given");
  cross_reward->add_option("--lr", ppo.learning_rate, "Learning rate when training");
  cross_reward->add_option("--episodes", ppo.episodes, "Dialogues per batch when training");
  cross_reward->add_option("--eval-seeds", eval_seeds, "Evaluation seeds (default: --seed)");
  cross_reward->add_flag("--no-rule-row", no_rule_row, "Omit the rule-policy stand-in row");

  // cross-eval
  auto* cross_eval_cmd = app.add_subcommand("cross-eval", "Success-rate matrix of systems against users");
  add_common(cross_eval_cmd, c);
  add_sim(cross_eval_cmd, s);
  std::vector<std::string> system_specs{"DS-1=1.0", "DS-2=0.5:0.1", "DS-3=0.2:0.3"};
  std::vector<std::string> user_specs{"rule=rule", "rule-terse=rule-terse", "stochastic=stochastic"};
  std::vector<std::uint64_t> ce_seeds;
  cross_eval_cmd->add_option("--system", system_specs, "NAME=p_u[:failure_rate] (repeatable)");
  cross_eval_cmd->add_option("--user", user_specs, "NAME=generator (repeatable)");
  cross_eval_cmd->add_option("--seeds", ce_seeds, "Seeds (default: --seed)");

  // eval-nlg
  auto* eval_nlg = app.add_subcommand("eval-nlg", "SER, BLEU and self-BLEU of a corpus's user utterances");
  add_common(eval_nlg, c);
  std::string nlg_corpus;
  std::size_t self_bleu_limit = 500;
  eval_nlg->add_option("--corpus", nlg_corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  eval_nlg->add_option("--self-bleu-limit", self_bleu_limit, "Use at most this many sentences for self-BLEU");

  // eval-semantic
  auto* eval_sem = app.add_subcommand("eval-semantic", "Precision, recall, F1 and turn accuracy of user actions");
  add_common(eval_sem, c);
  std::string gold_path, pred_path;
  eval_sem->add_option("--gold", gold_path, "Golden corpus JSONL")->required()->check(CLI::ExistingFile);
  eval_sem->add_option("--predicted", pred_path, "Predicted corpus JSONL (default: the golden one)")->check(CLI::ExistingFile);

  // graph-dump
  auto* graph_dump = app.add_subcommand("graph-dump", "Print the constraint graph for a goal and system action");
  add_common(graph_dump, c);
  std::string goal_path, system_json = "[]";
  std::size_t dump_max_actions = 5;
  graph_dump->add_option("--goal", goal_path, "Goal JSON file")->required()->check(CLI::ExistingFile);
  graph_dump->add_option("--system", system_json, "System action list as JSON, e.g. [[\"request\",\"hotel\",\"price\",\"?\"]]");
  graph_dump->add_option("--max-actions", dump_max_actions, "Action budget")->check(CLI::PositiveNumber);

  try {
    app.parse(hoist_config(argc, argv));
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*validate) {
      Ontology o;
      try {
        o = load_ontology(read_file(validate_path));
      } catch (const usersim::ParseError& e) {
        std::cerr << validate_path << ": " << e.what() << "\n";
        return 2;
      }
      std::cout << o.domains().size() << " domains, " << o.user_intents().size() << " user intents, " << o.slot_count()
                << " slots, " << o.value_count() << " values\n";
      return 0;
    }

    CLI::App* sub = app.get_subcommands().front();
    const ArtifactStamp stamp{config_hash(sub), c.seed};
    const auto o = load_ontology(read_file(c.ontology));
    const auto templates = TemplateTable::load(read_file(c.templates));
    const auto dcfg = dialogue_config(s);
    const auto scfg = system_config(s);
    const GoalSamplerConfig goals;

    if (*simulate || *make_corpus) {
      auto gen = make_generator(s.generator, o, templates, s);
      ScriptedSystem ds(o, scfg);
      auto ts = run_batch(*gen, ds, o, templates, goals, dcfg, s.n, c.seed);
      const auto rewards = default_rewards();
      std::size_t warnings = 0, errors = 0;
      for (const auto& t : ts) {
        for (const auto& r : t.turns) warnings += r.warnings.size();
        if (t.error) ++errors;
      }
      if (*simulate) {
        std::string log = meta_json(stamp).dump() + "\n";
        for (const auto& t : ts) log += transcript_to_json(t, rewards).dump() + "\n";
        write_file(c.out_dir, "transcripts.jsonl", log);
        auto summary = summarize(ts, rewards);
        write_file(c.out_dir, "summary.json", with_meta(to_json(summary), stamp).dump(2) + "\n");
        std::cout << "dialogues=" << summary.dialogues << " success_rate=" << format_fixed(summary.success_rate(), 3)
                  << " avg_turns=" << format_fixed(summary.avg_turns, 2)
                  << " avg_actions_per_turn=" << format_fixed(summary.avg_actions, 3) << "\n";
      } else {
        std::string out = meta_json(stamp).dump() + "\n";
        for (const auto& t : ts) out += serialize_dialogue(to_dialogue(t)) + "\n";
        auto p = write_file(c.out_dir, corpus_name, out);
        std::cout << "wrote " << ts.size() << " dialogues to " << p.string() << "\n";
      }
      if (warnings) std::cerr << "warnings: " << warnings << " (see transcripts)\n";
      if (errors) {
        std::cerr << errors << " dialogue(s) ended with a generator error\n";
        return 1;
      }
      return 0;
    }

    if (*make_pairs) {
      auto fs_opt = feature_set_from_string(features);
      if (!fs_opt) throw ValidationError("unknown feature set '" + features + "'");
      auto pairs = build_supervised_pairs(load_corpus(read_file(corpus_path)), *fs_opt, o, c.seed);
      std::string out = meta_json(stamp).dump() + "\n";
      for (const auto& p : pairs) out += Json{{"input", p.input}, {"output", p.output}}.dump() + "\n";
      auto p = write_file(c.out_dir, "pairs_" + features + ".jsonl", out);
      std::cout << "wrote " << pairs.size() << " pairs to " << p.string() << "\n";
      return 0;
    }

    if (*train_user) {
      Environment env{o, templates, goals, dcfg, scfg};
      auto init = init_path.empty() ? PolicyParameters::initial() : load_policy(init_path);
      auto r = train(init, env, reward_preset(reward_name), ppo, epochs, c.seed);
      Json ck = {{"policy", policy_to_json(r.best)}, {"reward", reward_name}, {"best_return", r.curve.empty() ? Json(nullptr) : Json(r.best_return)}};
      write_file(c.out_dir, "policy_" + reward_name + ".json", with_meta(ck, stamp).dump(2) + "\n");
      write_file(c.out_dir, "curve_" + reward_name + ".tsv", tsv_header(stamp) + curve_to_tsv(r.curve));
      write_file(c.out_dir, "curve_" + reward_name + ".json", with_meta({{"curve", curve_to_json(r.curve)}}, stamp).dump(2) + "\n");
      std::cout << "trained " << epochs << " epochs under " << reward_name;
      if (!r.curve.empty())
        std::cout << "; final batch: return=" << format_fixed(r.curve.back().mean_return, 2)
                  << " actions/turn=" << format_fixed(r.curve.back().mean_actions, 3);
      std::cout << "\n";
      return 0;
    }

    if (*cross_reward) {
      Environment env{o, templates, goals, dcfg, scfg};
      std::vector<PolicyGroup> rows;
      std::vector<std::string> rl_rows;
      if (policy_specs.empty()) {
        for (auto [name, rn] : {std::pair{"User 1", "r1"}, std::pair{"User 2", "r2"}}) {
          PolicyGroup g{name, {}};
          for (auto ts : train_seeds) {
            auto p = train(PolicyParameters::initial(), env, reward_preset(rn), ppo, cr_epochs, ts).best;
            g.members.push_back([&o, &templates, p] { return std::make_unique<StochasticGenerator>(o, templates, p); });
          }
          rows.push_back(std::move(g));
          rl_rows.push_back(name);
        }
      } else {
        for (const auto& spec : policy_specs) {
          auto [name, path] = split_named(spec);
          auto p = load_policy(path);
          rows.push_back({name, {[&o, &templates, p] { return std::make_unique<StochasticGenerator>(o, templates, p); }}});
          rl_rows.push_back(name);
        }
      }
      if (!no_rule_row)
        rows.push_back({"Supervised (rule stand-in)", {[&o, &templates] { return std::make_unique<RuleGenerator>(o, templates); }}});
      auto table = cross_reward_eval(rows, default_rewards(), env, s.n, parse_seeds(eval_seeds, c.seed));
      write_file(c.out_dir, "cross_reward.tsv", tsv_header(stamp) + table.to_tsv());
      Json j = table.to_json();
      j["note"] = "the supervised row is the rule policy; comparisons are directional only";
      write_file(c.out_dir, "cross_reward.json", with_meta(j, stamp).dump(2) + "\n");
      std::cout << table.to_tsv();
      std::cout << "highest r1 among RL rows: " << table.best_under("r1", rl_rows) << "\n";
      std::cout << "highest r2 among RL rows: " << table.best_under("r2", rl_rows) << "\n";
      return 0;
    }

    if (*cross_eval_cmd) {
      std::vector<NamedSystem> systems;
      for (const auto& spec : system_specs) {
        auto [name, val] = split_named(spec);
        auto sc = scfg;
        auto colon = val.find(':');
        try {
          sc.p_u = std::stod(val.substr(0, colon));
          if (colon != std::string::npos) sc.failure_rate = std::stod(val.substr(colon + 1));
        } catch (const std::exception&) {
          throw ValidationError("bad system spec '" + spec + "'");
        }
        systems.push_back({name, sc});
      }
      std::vector<NamedUser> users;
      for (const auto& spec : user_specs) {
        auto [name, gen] = split_named(spec);
        make_generator(gen, o, templates, s);  // fail early on a bad spec
        users.push_back({name, [&o, &templates, &s, gen = gen] { return make_generator(gen, o, templates, s); }});
      }
      auto m = cross_eval(systems, users, o, templates, goals, dcfg, s.n, parse_seeds(ce_seeds, c.seed));
      write_file(c.out_dir, "cross_eval.tsv", tsv_header(stamp) + m.to_tsv());
      write_file(c.out_dir, "cross_eval.json", with_meta(m.to_json(), stamp).dump(2) + "\n");
      std::cout << m.to_tsv();
      return 0;
    }

    if (*eval_nlg) {
      auto corpus = load_corpus(read_file(nlg_corpus));
      auto samples = user_samples(corpus);
      if (samples.empty()) throw ValidationError("corpus has no user turns");
      auto ser_r = ser(samples, ser_lexicon(o));
      std::vector<std::string> cands, texts;
      std::vector<std::vector<std::string>> refs;
      for (const auto& smp : samples) {
        cands.push_back(realize(smp.actions, o, templates));
        refs.push_back({smp.utterance});
        texts.push_back(smp.utterance);
      }
      const double bleu = corpus_bleu(cands, refs);
      if (texts.size() > self_bleu_limit) texts.resize(self_bleu_limit);
      std::optional<double> sb;
      if (texts.size() >= 2) sb = self_bleu(texts);
      Json report = {{"ser", to_json(ser_r)}, {"bleu", bleu}, {"self_bleu", sb ? Json(*sb) : Json(nullptr)}, {"samples", samples.size()}};
      write_file(c.out_dir, "nlg_report.json", with_meta(report, stamp).dump(2) + "\n");
      std::cout << "samples    " << samples.size() << "\n"
                << "SER        " << (ser_r.rate ? format_fixed(*ser_r.rate, 4) : std::string("undefined (N=0)")) << "  (m="
                << ser_r.m << " h=" << ser_r.h << " N=" << ser_r.n << ")\n"
                << "BLEU       " << format_fixed(bleu, 2) << "\n"
                << "self-BLEU  " << (sb ? format_fixed(*sb, 2) : std::string("n/a")) << "  (lower means more diverse)\n";
      return 0;
    }

    if (*eval_sem) {
      auto gold = load_corpus(read_file(gold_path));
      auto pred = pred_path.empty() ? gold : load_corpus(read_file(pred_path));
      if (gold.size() != pred.size()) throw ValidationError("golden and predicted corpora differ in dialogue count");
      std::vector<SemanticEvalPair> pairs;
      for (std::size_t i = 0; i < gold.size(); ++i) {
        std::vector<ActionList> g, p;
        for (const auto& t : gold[i].turns)
          if (t.speaker == Speaker::usr) g.push_back(t.action);
        for (const auto& t : pred[i].turns)
          if (t.speaker == Speaker::usr) p.push_back(t.action);
        if (g.size() != p.size())
          throw ValidationError("dialogue " + std::to_string(i) + ": user turn counts differ");
        for (std::size_t k = 0; k < g.size(); ++k) pairs.push_back({p[k], g[k]});
      }
      auto prf = semantic_prf(pairs);
      write_file(c.out_dir, "semantic_report.json", with_meta({{"semantic", to_json(prf)}, {"pairs", pairs.size()}}, stamp).dump(2) + "\n");
      std::cout << "pairs " << pairs.size() << "\nP     " << format_fixed(prf.p, 4) << (prf.p_undefined ? " (undefined)" : "")
                << "\nR     " << format_fixed(prf.r, 4) << (prf.r_undefined ? " (undefined)" : "") << "\nF1    "
                << format_fixed(prf.f1, 4) << "\nACC   " << format_fixed(prf.acc, 4) << "\n";
      return 0;
    }

    if (*graph_dump) {
      auto goal = deserialize_goal(read_file(goal_path));
      validate_goal(goal, o);
      auto sys = detail::actions_from_json(detail::parse_json(system_json, "--system"), "--system");
      auto cg = build_graph(o, goal, sys, {dump_max_actions});
      std::cout << cg.dump();
      return 0;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const usersim::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
