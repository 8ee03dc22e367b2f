#include <doctest.h>

#include <fstream>
#include <random>
#include <set>

#include "relagent/dataset.hpp"
#include "relagent/error.hpp"
#include "relagent/evaluation.hpp"
#include "relagent/hier_multi.hpp"
#include "test_support.hpp"

using namespace relagent;

namespace {

LabelSet core() { return builtin_label_set(DatasetId::core); }
SpecialistTeam core_team() { return builtin_specialists(DatasetId::core); }

RelationInstance acquisition() {
  return testing::make_instance("h1", "Globex was acquired by Initech in 2019", "Globex", "Initech",
                                std::string("acquired_by"));
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return Errc::Precondition;
}

struct HierRun {
  HierResult out;
  std::shared_ptr<ScriptedBackend> orch;
  std::shared_ptr<ScriptedBackend> spec;
};

HierRun hier(std::vector<std::string> orch_script, std::vector<std::string> spec_script, EngineConfig config = {}) {
  HierRun r;
  auto o = testing::scripted_endpoint(std::move(orch_script), &r.orch);
  auto s = testing::scripted_endpoint(std::move(spec_script), &r.spec);
  r.out = run_hier_multi(acquisition(), core(), core_team(), config, TemplateSet::builtin(), o, s);
  return r;
}

}  // namespace

TEST_CASE("shipped partitions are valid") {
  for (auto id : {DatasetId::core, DatasetId::refind, DatasetId::semeval}) {
    auto team = builtin_specialists(id);
    CHECK(team.specialists.size() == 3);
    CHECK_NOTHROW(team.validate(builtin_label_set(id)));
  }
  auto team = core_team();
  CHECK(team.specialists[0].allowed_labels ==
        std::vector<std::string>{"acquired_by", "subsidiary_of", "shareholder_of", "merged_with", "brand_of"});
  auto market = team.find("market_regulatory");
  REQUIRE(market);
  CHECK(market->allowed_labels == std::vector<std::string>{"product_or_service_of", "regulated_by", "traded_on"});
}

TEST_CASE("partition violations") {
  const auto labels = core();
  auto overlap = core_team();
  overlap.specialists[1].allowed_labels.push_back("acquired_by");
  CHECK(code_of([&] { overlap.validate(labels); }) == Errc::InvalidPartition);

  auto gap = core_team();
  gap.specialists[2].allowed_labels.pop_back();
  CHECK(code_of([&] { gap.validate(labels); }) == Errc::InvalidPartition);

  auto empty = core_team();
  empty.specialists[2].allowed_labels.clear();
  CHECK(code_of([&] { empty.validate(labels); }) == Errc::InvalidPartition);

  auto unknown = core_team();
  unknown.specialists[0].allowed_labels.push_back("sued_by");
  CHECK(code_of([&] { unknown.validate(labels); }) == Errc::InvalidPartition);

  auto dup = core_team();
  dup.specialists[1].id = dup.specialists[0].id;
  CHECK(code_of([&] { dup.validate(labels); }) == Errc::InvalidPartition);
}

TEST_CASE("partition files round-trip") {
  auto dir = testing::scratch_dir("team");
  std::ofstream(dir / "team.json") << core_team().to_json().dump(2);
  auto loaded = SpecialistTeam::load(dir / "team.json");
  CHECK(loaded.to_json() == core_team().to_json());
  auto custom = SpecialistTeam::load(testing::fixtures_dir() / "custom" / "specialists.json");
  auto custom_labels = load_dataset(DatasetId::custom, testing::fixtures_dir() / "custom").label_set;
  CHECK_NOTHROW(custom.validate(custom_labels));
}

TEST_CASE("routing replies") {
  const auto team = core_team();
  const auto labels = core();
  CHECK(parse_routing("Agent 1", team, labels) == "corporate_structure");
  CHECK(parse_routing("I would send this to Agent #3 (Market and Regulatory).", team, labels) == "market_regulatory");
  CHECK(parse_routing("business_interactions", team, labels) == "business_interactions");
  CHECK(parse_routing("no_relation", team, labels) == kNoRelationRoute);
  CHECK(parse_routing("There is no relation here.", team, labels) == kNoRelationRoute);
  CHECK_FALSE(parse_routing("Agent 7", team, labels));
  CHECK_FALSE(parse_routing("Agent 1 or Agent 2", team, labels));
  CHECK_FALSE(parse_routing("pass", team, labels));
}

TEST_CASE("route to a specialist") {
  Transcript t("h1");
  auto o = testing::scripted_endpoint({"Agent 1"});
  auto d = route(acquisition(), core_team(), core(), {}, TemplateSet::builtin(), o, t);
  CHECK(d.target == "corporate_structure");
  CHECK_FALSE(d.bypass());
  const auto& prompt = t.turns().at(0).request_summary;
  for (const auto& s : core_team().specialists) {
    CHECK(prompt.find(s.name) != std::string::npos);
    CHECK(prompt.find(s.description) != std::string::npos);
    for (const auto& l : s.allowed_labels) CHECK(prompt.find(l) != std::string::npos);
  }
}

TEST_CASE("bypass makes no specialist calls") {
  auto r = hier({"no_relation"}, {});
  CHECK(r.out.result.prediction.predicted_label == "no_relation");
  CHECK(r.out.result.prediction.attempts_used == 0);
  CHECK(r.out.result.transcript.count(AgentRole::specialist) == 0);
  CHECK(r.out.result.transcript.terminated_by() == Termination::single_pass);
  CHECK(r.out.routing->bypass());
}

TEST_CASE("unknown agent is re-asked once then unroutable") {
  std::shared_ptr<ScriptedBackend> orch;
  auto o = testing::scripted_endpoint({"Agent 7", "Agent 7"}, &orch);
  Transcript t("h1");
  CHECK(code_of([&] { route(acquisition(), core_team(), core(), {}, TemplateSet::builtin(), o, t); }) ==
        Errc::UnroutableResponse);
  CHECK(t.count(AgentRole::orchestrator) == 2);
  CHECK(orch->remaining() == 0);

  auto r = hier({"Agent 7", "Agent 7"}, {});
  CHECK_FALSE(r.out.result.prediction.ok());
  CHECK(r.out.result.transcript.terminated_by() == Termination::error);
}

TEST_CASE("accepted on the first attempt") {
  auto r = hier({"Agent 2", "ACCEPT"}, {"competitor_of"});
  CHECK(r.out.result.prediction.predicted_label == "competitor_of");
  CHECK(r.out.result.prediction.attempts_used == 1);
  CHECK(r.out.result.transcript.terminated_by() == Termination::approved);
}

TEST_CASE("two no_relation answers end the loop") {
  // Attempt 1: no_relation (count 1), verifier asks to reconsider.
  // Attempt 2: no_relation (count 2 = limit), exit without verification.
  auto r = hier({"Agent 2", "reconsider"}, {"no_relation", "no_relation"});
  CHECK(r.out.result.prediction.predicted_label == "no_relation");
  CHECK(r.out.result.prediction.attempts_used == 2);
  CHECK(r.out.result.transcript.terminated_by() == Termination::no_relation_repeat);
  CHECK(r.orch->remaining() == 0);
}

TEST_CASE("cap keeps the last label") {
  auto r = hier({"Agent 1", "REJECT", "REJECT"}, {"acquired_by", "subsidiary_of", "acquired_by"});
  CHECK(r.out.result.prediction.predicted_label == "acquired_by");
  CHECK(r.out.result.prediction.attempts_used == 3);
  CHECK(r.out.result.transcript.terminated_by() == Termination::max_cycles);
  CHECK(r.out.result.transcript.count(AgentRole::specialist) == 3);
  CHECK(r.out.result.transcript.count(AgentRole::orchestrator) == 3);
  const auto& third = r.out.result.transcript.turns().back();
  CHECK(third.role == AgentRole::specialist);
  CHECK(third.request_summary.find("select an alternative relation label") != std::string::npos);
}

TEST_CASE("out-of-set answers are rejected structurally") {
  auto r = hier({"Agent 1", "ACCEPT"}, {"competitor_of", "acquired_by"});
  CHECK(r.out.result.prediction.predicted_label == "acquired_by");
  CHECK(r.out.result.prediction.attempts_used == 2);
  const auto& turns = r.out.result.transcript.turns();
  CHECK(turns[1].parsed_outcome == "out_of_set:competitor_of");
  CHECK(turns[2].request_summary.find("not one of your permissible labels") != std::string::npos);
}

TEST_CASE("routing gold") {
  const auto team = core_team();
  const auto labels = core();
  auto with_gold = [](std::string g) {
    return testing::make_instance("g", "A and B", "A", "B", std::move(g));
  };
  CHECK(routing_gold(with_gold("acquired_by"), team, labels) == "corporate_structure");
  CHECK(routing_gold(with_gold("no_relation"), team, labels) == kNoRelationRoute);
  CHECK(routing_gold(with_gold("traded_on"), team, labels) == "market_regulatory");
}

TEST_CASE("random scripts stay within the routed set and the attempt cap") {
  std::mt19937_64 rng(99);
  const auto labels = core();
  const auto team = core_team();
  std::vector<std::string> route_pool{"Agent 1", "Agent 2", "Agent 3", "no_relation", "Agent 9"};
  std::vector<std::string> verdicts{"ACCEPT", "REJECT", "reject: wrong direction"};
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> orch{route_pool[rng() % route_pool.size()], route_pool[rng() % 4]};
    for (int i = 0; i < 4; ++i) orch.push_back(verdicts[rng() % verdicts.size()]);
    std::vector<std::string> spec;
    for (int i = 0; i < 8; ++i) {
      auto pick = rng() % 5;
      spec.push_back(pick == 0 ? "no_relation" : pick == 1 ? "gibberish" : labels.labels()[rng() % labels.size()]);
    }
    std::shared_ptr<ScriptedBackend> ob, sb;
    auto o = testing::scripted_endpoint(orch, &ob);
    auto s = testing::scripted_endpoint(spec, &sb);
    auto out = run_hier_multi(acquisition(), labels, team, {}, TemplateSet::builtin(), o, s);
    const auto& p = out.result.prediction;
    CHECK(p.attempts_used >= 0);
    CHECK(p.attempts_used <= 3);
    CHECK(out.result.transcript.count(AgentRole::specialist) <= 6);
    if (!out.routing || !p.ok()) continue;
    if (out.routing->bypass()) {
      CHECK(p.attempts_used == 0);
      continue;
    }
    CHECK(p.attempts_used >= 1);
    const auto* sp = team.find(out.routing->target);
    REQUIRE(sp);
    const bool allowed = *p.predicted_label == "no_relation" ||
                         std::find(sp->allowed_labels.begin(), sp->allowed_labels.end(), *p.predicted_label) !=
                             sp->allowed_labels.end();
    CHECK(allowed);
  }
}
