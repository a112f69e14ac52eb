#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "usersim/decoder.hpp"
#include "usersim/external.hpp"
#include "usersim/policy.hpp"
#include "usersim/realizer.hpp"
#include "usersim/semact.hpp"

namespace usersim {

struct Generation {
  OutputRecord output;
  std::vector<std::string> warnings;
  std::optional<PolicyStep> step;  // set by trainable generators
};

/// A user model: InputContext + turn graph -> action list and text.
class Generator {
 public:
  virtual ~Generator() = default;
  virtual std::string name() const = 0;
  virtual Generation generate(const InputContext& ctx, const ConstraintGraph& cg, Rng& rng) = 0;
};

class RuleGenerator : public Generator {
 public:
  RuleGenerator(const Ontology& o, const TemplateTable& t, ActionCountDist counts = default_action_counts())
      : o_(o), t_(t), counts_(std::move(counts)) {}

  std::string name() const override { return "rule"; }

  Generation generate(const InputContext& ctx, const ConstraintGraph& cg, Rng& rng) override {
    Generation out;
    out.output.action = rule_policy_step(o_, ctx.goal, ctx.system_action, cg, rng, counts_);
    out.output.text = realize(out.output.action, o_, t_);
    return out;
  }

 private:
  const Ontology& o_;
  const TemplateTable& t_;
  ActionCountDist counts_;
};

class StochasticGenerator : public Generator {
 public:
  StochasticGenerator(const Ontology& o, const TemplateTable& t, PolicyParameters p)
      : o_(o), t_(t), p_(std::move(p)) {
    p_.check();
  }

  std::string name() const override { return "stochastic"; }
  const PolicyParameters& parameters() const { return p_; }
  void set_parameters(PolicyParameters p) {
    p.check();
    p_ = std::move(p);
  }

  Generation generate(const InputContext& ctx, const ConstraintGraph& cg, Rng& rng) override {
    Generation out;
    auto step = stochastic_policy_step(p_, o_, ctx.goal, ctx.system_action, cg, ctx.turn, rng);
    out.output.action = step.action;
    out.output.text = realize(step.action, o_, t_);
    out.step = std::move(step);
    return out;
  }

 private:
  const Ontology& o_;
  const TemplateTable& t_;
  PolicyParameters p_;
};

struct ExternalOptions {
  std::chrono::milliseconds timeout{30'000};
  bool fail_on_empty = false;  // throw instead of falling back when projection empties the list
  bool fail_on_error = false;  // throw on timeout / protocol errors instead of falling back
};

struct GeneratorRequest {
  std::uint64_t id = 0;
  std::string input;
  Json options;
  std::size_t budget = 0;

  std::string to_line() const {
    return Json{{"id", id}, {"input", input}, {"options", options}, {"budget", budget}}.dump();
  }
};

inline GeneratorRequest make_request(std::uint64_t id, const InputContext& ctx, const ConstraintGraph& cg) {
  return {id, serialize_input(ctx), cg.options_json(), cg.max_actions()};
}

struct Projection {
  ActionList kept;
  std::vector<std::string> warnings;
};

/// Drops every tuple that would make the list illegal (unknown path, repeat, over budget).
inline Projection project_onto_graph(const ActionList& al, const ConstraintGraph& cg) {
  Projection p;
  for (const auto& a : al) {
    if (!cg.contains(a)) p.warnings.push_back("dropped illegal action " + a.str());
    else if (std::find(p.kept.begin(), p.kept.end(), a) != p.kept.end()) p.warnings.push_back("dropped repeated action " + a.str());
    else if (p.kept.size() >= cg.max_actions()) p.warnings.push_back("dropped action over budget " + a.str());
    else p.kept.push_back(a);
  }
  return p;
}

/// Sends one request and parses the reply. Throws ProtocolError / TimeoutError.
inline OutputRecord external_generate(LineTransport& transport, const GeneratorRequest& req,
                                      std::chrono::milliseconds timeout) {
  const std::string reply = transport.round_trip(req.to_line(), timeout);
  Json j;
  try {
    j = Json::parse(reply);
  } catch (const Json::exception& e) {
    throw ProtocolError(std::string("reply is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("id") || !j.contains("output") || !j.at("output").is_string())
    throw ProtocolError("reply must be {\"id\", \"output\"}");
  if (!j.at("id").is_number_unsigned() || j.at("id").get<std::uint64_t>() != req.id)
    throw ProtocolError("reply id does not match request id " + std::to_string(req.id));
  try {
    return parse_output(j.at("output").get<std::string>(), ParseMode::lenient);
  } catch (const ParseError& e) {
    throw ProtocolError(std::string("unparseable output: ") + e.what());
  }
}

/// Out-of-process model behind the line protocol; outputs are projected onto the turn graph,
/// and the rule policy stands in when nothing usable comes back.
class ExternalGenerator : public Generator {
 public:
  ExternalGenerator(const Ontology& o, const TemplateTable& t, std::unique_ptr<LineTransport> transport,
                    ExternalOptions opts = {}, ActionCountDist fallback_counts = default_action_counts())
      : o_(o), t_(t), transport_(std::move(transport)), opts_(opts), fallback_(o, t, std::move(fallback_counts)) {}

  std::string name() const override { return "external"; }

  Generation generate(const InputContext& ctx, const ConstraintGraph& cg, Rng& rng) override {
    Generation out;
    OutputRecord raw;
    try {
      raw = external_generate(*transport_, make_request(++next_id_, ctx, cg), opts_.timeout);
    } catch (const ProtocolError& e) {
      if (opts_.fail_on_error) throw;
      out = fallback_.generate(ctx, cg, rng);
      out.warnings.push_back(std::string("external generator failed (") + e.what() + "); used rule fallback");
      return out;
    }
    auto proj = project_onto_graph(raw.action, cg);
    out.warnings = std::move(proj.warnings);
    if (proj.kept.empty() && !raw.action.empty()) {
      if (opts_.fail_on_empty) throw ProtocolError("external output empty after projection");
      auto fb = fallback_.generate(ctx, cg, rng);
      fb.warnings.insert(fb.warnings.begin(), out.warnings.begin(), out.warnings.end());
      fb.warnings.push_back("external output empty after projection; used rule fallback");
      return fb;
    }
    out.output.action = std::move(proj.kept);
    // Text that may mention dropped values is re-rendered from the kept actions.
    out.output.text = out.warnings.empty() && !raw.text.empty() ? raw.text : realize(out.output.action, o_, t_);
    return out;
  }

 private:
  const Ontology& o_;
  const TemplateTable& t_;
  std::unique_ptr<LineTransport> transport_;
  ExternalOptions opts_;
  RuleGenerator fallback_;
  std::uint64_t next_id_ = 0;
};

}  // namespace usersim
