#include "relagent/types.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <utility>

#include <fmt/format.h>

#include "relagent/error.hpp"

namespace relagent {

namespace {

template <typename Enum, std::size_t N>
Enum lookup(const std::array<std::pair<Enum, std::string_view>, N>& table, std::string_view name,
            std::string_view what) {
  for (const auto& [value, text] : table) {
    if (text == name) return value;
  }
  throw Error(Errc::InvalidConfig, fmt::format("unknown {} '{}'", what, name));
}

template <typename Enum, std::size_t N>
std::string_view name_of(const std::array<std::pair<Enum, std::string_view>, N>& table, Enum value) {
  for (const auto& [v, text] : table) {
    if (v == value) return text;
  }
  return "?";
}

constexpr std::array<std::pair<DatasetId, std::string_view>, 4> kDatasets{{
    {DatasetId::core, "core"},
    {DatasetId::refind, "refind"},
    {DatasetId::semeval, "semeval"},
    {DatasetId::custom, "custom"},
}};

constexpr std::array<std::pair<Architecture, std::string_view>, 5> kArchitectures{{
    {Architecture::zero_shot, "zero_shot"},
    {Architecture::few_shot, "few_shot"},
    {Architecture::gen_reflect, "gen_reflect"},
    {Architecture::hier_multi, "hier_multi"},
    {Architecture::dyn_ex, "dyn_ex"},
}};

constexpr std::array<std::pair<AgentRole, std::string_view>, 8> kRoles{{
    {AgentRole::generator, "generator"},
    {AgentRole::reflector, "reflector"},
    {AgentRole::orchestrator, "orchestrator"},
    {AgentRole::specialist, "specialist"},
    {AgentRole::example_generator, "example_generator"},
    {AgentRole::retriever, "retriever"},
    {AgentRole::example_selector, "example_selector"},
    {AgentRole::classifier, "classifier"},
}};

constexpr std::array<std::pair<Termination, std::string_view>, 6> kTerminations{{
    {Termination::running, "running"},
    {Termination::approved, "approved"},
    {Termination::max_cycles, "max_cycles"},
    {Termination::no_relation_repeat, "no_relation_repeat"},
    {Termination::single_pass, "single_pass"},
    {Termination::error, "error"},
}};

template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& value) {
  j[key] = value ? json(*value) : json(nullptr);
}

template <typename T>
std::optional<T> get_optional(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

}  // namespace

std::string_view to_string(DatasetId id) { return name_of(kDatasets, id); }
DatasetId parse_dataset_id(std::string_view name) { return lookup(kDatasets, name, "dataset"); }
std::string_view to_string(Architecture a) { return name_of(kArchitectures, a); }
Architecture parse_architecture(std::string_view name) {
  return lookup(kArchitectures, name, "architecture");
}
std::string_view to_string(AgentRole r) { return name_of(kRoles, r); }
AgentRole parse_agent_role(std::string_view name) { return lookup(kRoles, name, "agent role"); }
std::string_view to_string(Termination t) { return name_of(kTerminations, t); }
Termination parse_termination(std::string_view name) {
  return lookup(kTerminations, name, "termination");
}

// ---------------------------------------------------------------------------
// LabelSet

LabelSet::LabelSet(DatasetId dataset, std::vector<std::string> labels,
                   std::string no_relation_label, bool directed,
                   std::map<std::string, std::string> aliases)
    : dataset_(dataset),
      labels_(std::move(labels)),
      no_relation_(std::move(no_relation_label)),
      directed_(directed),
      aliases_(std::move(aliases)) {
  std::set<std::string_view> seen;
  for (const auto& l : labels_) {
    if (l.empty()) throw Error(Errc::InvalidLabelSet, "empty label name");
    if (!seen.insert(l).second) {
      throw Error(Errc::InvalidLabelSet, fmt::format("duplicate label '{}'", l));
    }
  }
  if (!contains(no_relation_)) {
    throw Error(Errc::InvalidLabelSet,
                fmt::format("no-relation label '{}' is not a member", no_relation_));
  }
  for (const auto& [alias, target] : aliases_) {
    if (!contains(target)) {
      throw Error(Errc::InvalidLabelSet,
                  fmt::format("alias '{}' points at unknown label '{}'", alias, target));
    }
  }
}

bool LabelSet::contains(std::string_view label) const {
  return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
}

std::optional<std::string> LabelSet::normalize(std::string_view name) const {
  if (contains(name)) return std::string(name);
  if (auto it = aliases_.find(std::string(name)); it != aliases_.end()) return it->second;
  return std::nullopt;
}

LabelSet LabelSet::restricted_to(const std::vector<std::string>& keep) const {
  std::vector<std::string> out;
  for (const auto& l : labels_) {
    if (l == no_relation_ || std::find(keep.begin(), keep.end(), l) != keep.end()) {
      out.push_back(l);
    }
  }
  return LabelSet(dataset_, std::move(out), no_relation_, directed_, aliases_);
}

// ---------------------------------------------------------------------------
// Transcript

void Transcript::append(TranscriptTurn turn) {
  if (!turns_.empty() && turn.cycle_index < turns_.back().cycle_index) {
    throw Error(Errc::InvalidConfig,
                fmt::format("transcript {}: cycle index {} after {}", instance_id_,
                            turn.cycle_index, turns_.back().cycle_index));
  }
  turns_.push_back(std::move(turn));
}

void Transcript::finish(Termination how, std::optional<std::string> final_label) {
  terminated_by_ = how;
  final_label_ = std::move(final_label);
}

std::size_t Transcript::count(AgentRole role) const {
  return static_cast<std::size_t>(std::count_if(
      turns_.begin(), turns_.end(), [role](const TranscriptTurn& t) { return t.role == role; }));
}

// ---------------------------------------------------------------------------
// EngineConfig

void EngineConfig::validate() const {
  auto positive = [](int v, std::string_view field) {
    if (v <= 0) throw Error(Errc::InvalidConfig, fmt::format("{} must be positive, got {}", field, v));
  };
  positive(max_dialogue_cycles, "max_dialogue_cycles");
  positive(max_classification_attempts, "max_classification_attempts");
  positive(no_relation_repeat_limit, "no_relation_repeat_limit");
  positive(n_generated_positive, "n_generated_positive");
  positive(n_generated_negative, "n_generated_negative");
  positive(n_retrieved, "n_retrieved");
  positive(n_selected, "n_selected");
  if (n_selected > n_generated_positive + n_generated_negative + n_retrieved) {
    throw Error(Errc::InvalidConfig, "n_selected exceeds the example pool capacity");
  }
  if (n_shot != 0 && n_shot != 3 && n_shot != 5) {
    throw Error(Errc::InvalidConfig, fmt::format("n_shot must be 0, 3 or 5, got {}", n_shot));
  }
  if (!(temperature >= 0.0)) throw Error(Errc::InvalidConfig, "temperature must be >= 0");
}

// ---------------------------------------------------------------------------
// validate_instance

const RelationInstance& validate_instance(const RelationInstance& instance, const LabelSet& labels) {
  const auto n = instance.sentence.size();
  auto check_span = [&](const EntitySpan& span, std::string_view field) {
    if (span.start >= span.end || span.end > n) {
      throw Error(Errc::OffsetOutOfBounds,
                  fmt::format("{} ({},{}) outside sentence of length {} in instance {}", field,
                              span.start, span.end, n, instance.id));
    }
  };
  check_span(instance.head, "head_entity");
  check_span(instance.tail, "tail_entity");
  if (instance.head.start < instance.tail.end && instance.tail.start < instance.head.end) {
    throw Error(Errc::OverlappingEntities,
                fmt::format("head_entity and tail_entity overlap in instance {}", instance.id));
  }
  if (instance.gold_label && !labels.contains(*instance.gold_label)) {
    throw Error(Errc::UnknownGoldLabel,
                fmt::format("gold_label '{}' not in label set of instance {}", *instance.gold_label,
                            instance.id));
  }
  return instance;
}

// ---------------------------------------------------------------------------
// JSON

void to_json(json& j, const EntitySpan& s) {
  j = json{{"text", s.text}, {"start", s.start}, {"end", s.end}};
}

void from_json(const json& j, EntitySpan& s) {
  j.at("text").get_to(s.text);
  j.at("start").get_to(s.start);
  j.at("end").get_to(s.end);
}

void to_json(json& j, const RelationInstance& r) {
  j = json{{"id", r.id},
           {"sentence", r.sentence},
           {"head_entity", r.head},
           {"tail_entity", r.tail},
           {"dataset_id", to_string(r.dataset)}};
  put_optional(j, "gold_label", r.gold_label);
}

void from_json(const json& j, RelationInstance& r) {
  j.at("id").get_to(r.id);
  j.at("sentence").get_to(r.sentence);
  j.at("head_entity").get_to(r.head);
  j.at("tail_entity").get_to(r.tail);
  r.gold_label = get_optional<std::string>(j, "gold_label");
  r.dataset = parse_dataset_id(j.value("dataset_id", std::string("custom")));
}

void to_json(json& j, const LabelSet& l) {
  j = json{{"dataset_id", to_string(l.dataset())},
           {"labels", l.labels()},
           {"no_relation_label", l.no_relation_label()},
           {"directed", l.directed()},
           {"aliases", l.aliases()}};
}

void from_json(const json& j, LabelSet& l) {
  l = LabelSet(parse_dataset_id(j.value("dataset_id", std::string("custom"))),
               j.at("labels").get<std::vector<std::string>>(),
               j.at("no_relation_label").get<std::string>(), j.value("directed", false),
               j.value("aliases", std::map<std::string, std::string>{}));
}

void to_json(json& j, const TranscriptTurn& t) {
  j = json{{"role", to_string(t.role)},
           {"request_summary", t.request_summary},
           {"raw_response", t.raw_response},
           {"parsed_outcome", t.parsed_outcome},
           {"cycle_index", t.cycle_index}};
}

void from_json(const json& j, TranscriptTurn& t) {
  t.role = parse_agent_role(j.at("role").get<std::string>());
  j.at("request_summary").get_to(t.request_summary);
  j.at("raw_response").get_to(t.raw_response);
  j.at("parsed_outcome").get_to(t.parsed_outcome);
  j.at("cycle_index").get_to(t.cycle_index);
}

void to_json(json& j, const Transcript& t) {
  j = json{{"instance_id", t.instance_id_},
           {"turns", t.turns_},
           {"terminated_by", to_string(t.terminated_by_)},
           {"notes", t.notes_}};
  put_optional(j, "final_label", t.final_label_);
}

void from_json(const json& j, Transcript& t) {
  t = Transcript(j.at("instance_id").get<std::string>());
  for (const auto& turn : j.at("turns")) t.append(turn.get<TranscriptTurn>());
  t.terminated_by_ = parse_termination(j.at("terminated_by").get<std::string>());
  t.final_label_ = get_optional<std::string>(j, "final_label");
  t.notes_ = j.value("notes", std::vector<std::string>{});
}

void to_json(json& j, const Prediction& p) {
  j = json{{"instance_id", p.instance_id},
           {"architecture", to_string(p.architecture)},
           {"attempts_used", p.attempts_used},
           {"transcript_ref", p.transcript_ref}};
  put_optional(j, "predicted_label", p.predicted_label);
  put_optional(j, "error", p.error);
}

void from_json(const json& j, Prediction& p) {
  j.at("instance_id").get_to(p.instance_id);
  p.architecture = parse_architecture(j.at("architecture").get<std::string>());
  j.at("attempts_used").get_to(p.attempts_used);
  j.at("transcript_ref").get_to(p.transcript_ref);
  p.predicted_label = get_optional<std::string>(j, "predicted_label");
  p.error = get_optional<std::string>(j, "error");
}

void to_json(json& j, const EngineConfig& c) {
  j = json{{"max_dialogue_cycles", c.max_dialogue_cycles},
           {"max_classification_attempts", c.max_classification_attempts},
           {"no_relation_repeat_limit", c.no_relation_repeat_limit},
           {"n_generated_positive", c.n_generated_positive},
           {"n_generated_negative", c.n_generated_negative},
           {"n_retrieved", c.n_retrieved},
           {"n_selected", c.n_selected},
           {"n_shot", c.n_shot},
           {"temperature", c.temperature},
           {"exemplar_seed", c.exemplar_seed}};
}

void from_json(const json& j, EngineConfig& c) {
  EngineConfig d;
  c.max_dialogue_cycles = j.value("max_dialogue_cycles", d.max_dialogue_cycles);
  c.max_classification_attempts = j.value("max_classification_attempts", d.max_classification_attempts);
  c.no_relation_repeat_limit = j.value("no_relation_repeat_limit", d.no_relation_repeat_limit);
  c.n_generated_positive = j.value("n_generated_positive", d.n_generated_positive);
  c.n_generated_negative = j.value("n_generated_negative", d.n_generated_negative);
  c.n_retrieved = j.value("n_retrieved", d.n_retrieved);
  c.n_selected = j.value("n_selected", d.n_selected);
  c.n_shot = j.value("n_shot", d.n_shot);
  c.temperature = j.value("temperature", d.temperature);
  c.exemplar_seed = j.value("exemplar_seed", d.exemplar_seed);
}

}  // namespace relagent
