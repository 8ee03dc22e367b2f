#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "relagent/evaluation.hpp"
#include "test_support.hpp"

using namespace relagent;

namespace {

LabelSet labels_az(std::size_t n) {
  std::vector<std::string> ls;
  for (std::size_t i = 0; i + 1 < n; ++i) ls.push_back(std::string(1, char('A' + i)));
  ls.push_back("no_relation");
  return LabelSet(DatasetId::custom, ls, "no_relation", false);
}

struct Case {
  std::vector<Prediction> preds;
  std::map<std::string, std::string> golds;
};

Case make_case(const std::vector<std::string>& golds, const std::vector<std::optional<std::string>>& preds) {
  Case c;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    auto id = "i" + std::to_string(i);
    c.golds[id] = golds[i];
    Prediction p;
    p.instance_id = id;
    p.predicted_label = preds[i];
    if (!preds[i]) p.error = "unparseable";
    c.preds.push_back(p);
  }
  return c;
}

// Direct counting over (gold, prediction) pairs.
struct OracleScore {
  double macro = 0;
  double micro = 0;
};

OracleScore oracle(const Case& c, const std::string& no_rel, bool exclude) {
  std::set<std::string> seen;
  for (const auto& p : c.preds) {
    seen.insert(c.golds.at(p.instance_id));
    if (p.predicted_label) seen.insert(*p.predicted_label);
  }
  long TP = 0, FP = 0, FN = 0;
  double sum = 0;
  int n = 0;
  for (const auto& label : seen) {
    if (exclude && label == no_rel) continue;
    long tp = 0, fp = 0, fn = 0;
    for (const auto& p : c.preds) {
      const auto& g = c.golds.at(p.instance_id);
      const bool pl = p.predicted_label && *p.predicted_label == label;
      if (pl && g == label) ++tp;
      if (pl && g != label) ++fp;
      if (!pl && g == label) ++fn;
    }
    sum += tp == 0 ? 0.0 : 2.0 * double(tp) / double(2 * tp + fp + fn);
    ++n;
    TP += tp;
    FP += fp;
    FN += fn;
  }
  OracleScore o;
  o.macro = n ? sum / n : 0.0;
  o.micro = (2 * TP + FP + FN) ? 2.0 * double(TP) / double(2 * TP + FP + FN) : 0.0;
  return o;
}

}  // namespace

TEST_CASE("hand-computed example") {
  auto c = make_case({"A", "A", "B"}, {"A", "B", "B"});
  auto s = score(c.preds, c.golds, labels_az(3));
  CHECK(s.tally.per_label.at("A") == LabelCounts{1, 0, 1});
  CHECK(s.tally.per_label.at("B") == LabelCounts{1, 1, 0});
  CHECK(std::abs(s.per_label_f1.at("A") - 2.0 / 3.0) < 1e-12);
  CHECK(std::abs(s.per_label_f1.at("B") - 2.0 / 3.0) < 1e-12);
  CHECK(std::abs(s.macro_f1 - 2.0 / 3.0) < 1e-12);
  CHECK(std::abs(s.micro_f1 - 2.0 / 3.0) < 1e-12);
}

TEST_CASE("perfect predictions score 1") {
  auto c = make_case({"A", "B", "no_relation", "C"}, {"A", "B", "no_relation", "C"});
  auto s = score(c.preds, c.golds, labels_az(4));
  CHECK(s.macro_f1 == 1.0);
  CHECK(s.micro_f1 == 1.0);
}

TEST_CASE("error records count against the gold label only") {
  auto c = make_case({"A", "B"}, {std::nullopt, "B"});
  auto s = score(c.preds, c.golds, labels_az(3));
  CHECK(s.tally.per_label.at("A") == LabelCounts{0, 0, 1});
  CHECK(s.tally.per_label.count(kInvalidLabel) == 0);
  CHECK(s.per_label_f1.at("A") == 0.0);
  CHECK(s.macro_f1 == 0.5);
}

TEST_CASE("no_relation exclusion") {
  auto c = make_case({"A", "no_relation", "no_relation"}, {"A", "no_relation", "A"});
  auto with = score(c.preds, c.golds, labels_az(2));
  auto without = score(c.preds, c.golds, labels_az(2), true);
  CHECK(with.per_label_f1.count("no_relation") == 1);
  CHECK(without.per_label_f1.count("no_relation") == 0);
  CHECK(without.macro_f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("id mismatches") {
  auto c = make_case({"A"}, {"A"});
  c.golds["extra"] = "A";
  CHECK_THROWS_AS(score(c.preds, c.golds, labels_az(2)), Error);
  auto d = make_case({"A"}, {"A"});
  d.preds[0].instance_id = "nope";
  CHECK_THROWS_AS(score(d.preds, d.golds, labels_az(2)), Error);
}

TEST_CASE("random cases agree with the counting oracle") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t nl = 2 + rng() % 19;
    const auto labels = labels_az(nl);
    const std::size_t n = 1 + rng() % 200;
    std::vector<std::string> g;
    std::vector<std::optional<std::string>> p;
    for (std::size_t i = 0; i < n; ++i) {
      g.push_back(labels.labels()[rng() % nl]);
      if (rng() % 20 == 0) {
        p.push_back(std::nullopt);
      } else {
        p.push_back(labels.labels()[rng() % nl]);
      }
    }
    auto c = make_case(g, p);
    const bool exclude = rng() % 2;
    auto s = score(c.preds, c.golds, labels, exclude);
    auto o = oracle(c, "no_relation", exclude);
    CHECK(s.macro_f1 == o.macro);
    CHECK(s.micro_f1 == o.micro);
    CHECK(s.macro_f1 >= 0.0);
    CHECK(s.macro_f1 <= 1.0);
    CHECK(s.micro_f1 >= 0.0);
    CHECK(s.micro_f1 <= 1.0);

    // Micro F1 equals accuracy when every instance gets exactly one label.
    if (!exclude && std::all_of(p.begin(), p.end(), [](const auto& x) { return x.has_value(); })) {
      std::size_t correct = 0;
      for (std::size_t i = 0; i < n; ++i) correct += g[i] == *p[i];
      CHECK(s.micro_f1 == doctest::Approx(double(correct) / double(n)).epsilon(1e-12));
    }

    // Permuting instance order changes nothing.
    auto shuffled = c.preds;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto s2 = score(shuffled, c.golds, labels, exclude);
    CHECK(s2.macro_f1 == s.macro_f1);
    CHECK(s2.micro_f1 == s.micro_f1);
  }
}

TEST_CASE("routing F1") {
  auto s = score_routing({{"1", "s1"}, {"2", "s1"}, {"3", "s2"}}, {{"1", "s1"}, {"2", "s2"}, {"3", "s2"}},
                         {"s1", "s2"});
  CHECK(std::abs(s.per_specialist.at("s1") - 2.0 / 3.0) < 1e-12);
  CHECK(std::abs(s.per_specialist.at("s2") - 2.0 / 3.0) < 1e-12);
  CHECK_FALSE(s.no_relation);

  std::map<std::string, std::string> gold{{"1", "s1"}, {"2", "s2"}, {"3", kNoRelationRoute}, {"4", "s3"}};
  auto perfect = score_routing(gold, gold, {"s1", "s2", "s3"});
  for (const auto& [id, f1] : perfect.per_specialist) CHECK(f1 == 1.0);
  CHECK(perfect.no_relation == 1.0);
  CHECK_THROWS_AS(score_routing({{"1", "s1"}}, {{"2", "s1"}}, {"s1"}), Error);
}

namespace {

RunReport report_for(DatasetId d, Architecture a, std::string model, double macro, double micro) {
  RunReport r;
  r.run_id = std::string(to_string(a)) + "-" + std::string(to_string(d));
  r.architecture = a;
  r.dataset = d;
  r.model_ids = {{"classifier", std::move(model)}};
  r.macro_f1 = macro;
  r.micro_f1 = micro;
  return r;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(s);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

}  // namespace

TEST_CASE("report rendering") {
  auto one = render_report({report_for(DatasetId::core, Architecture::few_shot, "m", 0.5, 0.6)});
  CHECK(one.table["rows"].size() == 1);
  CHECK(one.table["columns"].size() == 2);

  std::vector<RunReport> reports{
      report_for(DatasetId::semeval, Architecture::dyn_ex, "m", 1.0 / 3.0, 0.635),
      report_for(DatasetId::core, Architecture::gen_reflect, "m", 0.1 + 0.2, 0.759),
      report_for(DatasetId::refind, Architecture::dyn_ex, "m", 0.6421, 0.642),
  };
  auto r = render_report(reports);
  CHECK(r.table["columns"].size() == 6);
  CHECK(r.table["rows"].size() == 2);
  CHECK(r.table["rows"][0]["architecture"] == "gen_reflect");
  CHECK(r.table["rows"][1]["architecture"] == "dyn_ex");

  // Ordering does not depend on input order.
  std::reverse(reports.begin(), reports.end());
  CHECK(render_report(reports).csv == r.csv);
  CHECK(render_report(reports).text == r.text);

  // CSV values parse back to the JSON values exactly.
  std::istringstream lines(r.csv);
  std::string header, line;
  std::getline(lines, header);
  auto cols = split(header, ',');
  std::size_t row = 0;
  while (std::getline(lines, line)) {
    auto cells = split(line, ',');
    const auto& values = r.table["rows"][row]["values"];
    for (std::size_t c = 2; c < cols.size(); ++c) {
      if (cells[c].empty()) {
        CHECK(values[cols[c]].is_null());
      } else {
        CHECK(std::stod(cells[c]) == values[cols[c]].get<double>());
      }
    }
    ++row;
  }
  CHECK(row == 2);
}

TEST_CASE("run reports round-trip") {
  auto r = report_for(DatasetId::core, Architecture::hier_multi, "m", 0.25, 0.5);
  r.per_label_f1 = {{"a", 0.5}};
  r.routing_f1 = RoutingScore{{{"s1", 0.88}}, 0.9};
  r.error_count = 1;
  r.instance_count = 4;
  json j = r;
  CHECK(j["schema_version"] == kReportSchemaVersion);
  auto back = j.get<RunReport>();
  CHECK(json(back) == j);
}
