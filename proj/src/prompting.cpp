#include "relagent/prompting.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "relagent/error.hpp"
#include "relagent/util.hpp"

namespace relagent {

// Generated at build time from templates/default/*.txt.
const std::map<std::string, std::string>& builtin_template_texts();

namespace {

constexpr std::array<std::pair<TemplateRole, std::string_view>, 9> kTemplateRoles{{
    {TemplateRole::baseline_classifier, "baseline_classifier"},
    {TemplateRole::generator, "generator"},
    {TemplateRole::reflector, "reflector"},
    {TemplateRole::orchestrator_router, "orchestrator_router"},
    {TemplateRole::orchestrator_verifier, "orchestrator_verifier"},
    {TemplateRole::specialist, "specialist"},
    {TemplateRole::example_generator, "example_generator"},
    {TemplateRole::example_selector, "example_selector"},
    {TemplateRole::dyn_classifier, "dyn_classifier"},
}};

bool is_slot_char(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }

// Calls `on_slot(name)` for each marker and `on_text(chunk)` for literal text.
template <typename OnText, typename OnSlot>
void scan_template(std::string_view text, OnText on_text, OnSlot on_slot) {
  std::size_t literal_start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      std::size_t j = i + 1;
      while (j < text.size() && is_slot_char(text[j])) ++j;
      if (j > i + 1 && j < text.size() && text[j] == '}') {
        on_text(text.substr(literal_start, i - literal_start));
        on_slot(text.substr(i + 1, j - i - 1));
        i = j + 1;
        literal_start = i;
        continue;
      }
    }
    ++i;
  }
  on_text(text.substr(literal_start));
}

std::string substitute(std::string_view text, const SlotBindings& bindings) {
  std::string out;
  scan_template(
      text, [&](std::string_view chunk) { out += chunk; },
      [&](std::string_view slot) {
        auto it = bindings.find(slot);
        if (it == bindings.end()) {
          throw Error(Errc::UnboundSlot, fmt::format("slot '{}' is not bound", slot));
        }
        out += it->second;
      });
  return out;
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    start = end + 1;
  }
  return lines;
}

std::string first_nonempty_line(std::string_view text) {
  for (const auto& line : split_lines(text)) {
    auto t = trim(line);
    if (!t.empty()) return t;
  }
  return {};
}

// Strips markdown emphasis, quotes and trailing punctuation models like to add
// around a bare label.
std::string strip_decoration(std::string_view s) {
  auto t = trim(s);
  const std::string_view edge = "\"'`*_ ";
  std::size_t b = 0;
  std::size_t e = t.size();
  while (b < e && edge.find(t[b]) != std::string_view::npos) ++b;
  while (e > b && (edge.find(t[e - 1]) != std::string_view::npos || t[e - 1] == '.' ||
                   t[e - 1] == ':' || t[e - 1] == ';' || t[e - 1] == ',')) {
    --e;
  }
  return t.substr(b, e - b);
}

// Exact or case-insensitive equality with a member or an alias.
std::optional<std::string> match_whole(std::string_view candidate, const LabelSet& labels) {
  if (auto exact = labels.normalize(candidate)) return exact;
  const auto lowered = to_lower(candidate);
  for (const auto& l : labels.labels()) {
    if (to_lower(l) == lowered) return l;
  }
  for (const auto& [alias, target] : labels.aliases()) {
    if (to_lower(alias) == lowered) return target;
  }
  return std::nullopt;
}

std::vector<std::size_t> occurrences(std::string_view haystack, std::string_view needle) {
  std::vector<std::size_t> out;
  if (needle.empty()) return out;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + 1)) {
    out.push_back(pos);
  }
  return out;
}

}  // namespace

std::string_view to_string(TemplateRole r) {
  for (const auto& [role, name] : kTemplateRoles) {
    if (role == r) return name;
  }
  return "?";
}

TemplateRole parse_template_role(std::string_view name) {
  for (const auto& [role, text] : kTemplateRoles) {
    if (text == name) return role;
  }
  throw Error(Errc::InvalidConfig, fmt::format("unknown template role '{}'", name));
}

const std::vector<TemplateRole>& all_template_roles() {
  static const std::vector<TemplateRole> roles = [] {
    std::vector<TemplateRole> out;
    for (const auto& [role, name] : kTemplateRoles) out.push_back(role);
    return out;
  }();
  return roles;
}

// ---------------------------------------------------------------------------
// Templates

std::vector<std::string> PromptTemplate::slots() const {
  std::set<std::string> names;
  auto collect = [&](std::string_view text) {
    scan_template(
        text, [](std::string_view) {}, [&](std::string_view slot) { names.emplace(slot); });
  };
  collect(system_text);
  collect(user_text);
  return {names.begin(), names.end()};
}

PromptTemplate PromptTemplate::parse(TemplateRole role, std::string_view file_text) {
  PromptTemplate tmpl;
  tmpl.role = role;
  std::string* target = nullptr;
  bool saw_system = false;
  bool saw_user = false;
  for (const auto& line : split_lines(file_text)) {
    if (trim(line) == "[system]") {
      target = &tmpl.system_text;
      saw_system = true;
      continue;
    }
    if (trim(line) == "[user]") {
      target = &tmpl.user_text;
      saw_user = true;
      continue;
    }
    if (target == nullptr) {
      if (!trim(line).empty()) {
        throw Error(Errc::InvalidConfig,
                    fmt::format("template {}: text before [system]", to_string(role)));
      }
      continue;
    }
    *target += line;
    *target += '\n';
  }
  if (!saw_system || !saw_user) {
    throw Error(Errc::InvalidConfig,
                fmt::format("template {} needs [system] and [user] sections", to_string(role)));
  }
  auto rstrip = [](std::string& s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  };
  rstrip(tmpl.system_text);
  rstrip(tmpl.user_text);
  return tmpl;
}

std::string PromptTemplate::serialize() const {
  return fmt::format("[system]\n{}\n[user]\n{}\n", system_text, user_text);
}

ChatRequest render_prompt(const PromptTemplate& tmpl, const SlotBindings& bindings,
                          std::string model_id, double temperature) {
  ChatRequest request;
  request.model_id = std::move(model_id);
  request.temperature = temperature;
  auto system = substitute(tmpl.system_text, bindings);
  if (!trim(system).empty()) request.messages.push_back({ChatRole::system, std::move(system)});
  request.messages.push_back({ChatRole::user, substitute(tmpl.user_text, bindings)});
  return request;
}

TemplateSet TemplateSet::builtin() {
  TemplateSet set;
  const auto& texts = builtin_template_texts();
  for (auto role : all_template_roles()) {
    auto it = texts.find(std::string(to_string(role)));
    if (it == texts.end()) {
      throw Error(Errc::InvalidConfig, fmt::format("no built-in template for {}", to_string(role)));
    }
    set.set(PromptTemplate::parse(role, it->second));
  }
  return set;
}

TemplateSet TemplateSet::load(const std::filesystem::path& dir, DatasetId dataset) {
  auto set = builtin();
  for (auto role : all_template_roles()) {
    const auto file = std::string(to_string(role)) + ".txt";
    for (const auto& candidate : {dir / to_string(dataset) / file, dir / file}) {
      if (std::filesystem::exists(candidate)) {
        set.set(PromptTemplate::parse(role, read_file(candidate)));
        break;
      }
    }
  }
  return set;
}

const PromptTemplate& TemplateSet::get(TemplateRole role) const {
  auto it = templates_.find(role);
  if (it == templates_.end()) {
    throw Error(Errc::InvalidConfig, fmt::format("no template for {}", to_string(role)));
  }
  return it->second;
}

void TemplateSet::set(PromptTemplate tmpl) {
  const auto role = tmpl.role;
  templates_[role] = std::move(tmpl);
}

std::map<std::string, std::string> TemplateSet::hashes() const {
  std::map<std::string, std::string> out;
  for (const auto& [role, tmpl] : templates_) {
    out[std::string(to_string(role))] = sha256_hex(tmpl.serialize());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Instance rendering

std::string mark_entities(const RelationInstance& instance) {
  struct Insert {
    std::size_t pos;
    int order;
    std::string_view tag;
  };
  std::vector<Insert> inserts{
      {instance.head.start, 1, "<e1>"},
      {instance.head.end, 0, "</e1>"},
      {instance.tail.start, 1, "<e2>"},
      {instance.tail.end, 0, "</e2>"},
  };
  // Closing tags sort before opening tags at the same offset.
  std::sort(inserts.begin(), inserts.end(), [](const Insert& a, const Insert& b) {
    return a.pos != b.pos ? a.pos < b.pos : a.order < b.order;
  });
  std::string out;
  std::size_t cursor = 0;
  const auto& s = instance.sentence;
  for (const auto& ins : inserts) {
    const auto pos = std::min(ins.pos, s.size());
    out.append(s, cursor, pos - cursor);
    out += ins.tag;
    cursor = pos;
  }
  out.append(s, cursor, std::string::npos);
  return out;
}

std::string mark_surface(std::string_view sentence, std::string_view head, std::string_view tail) {
  RelationInstance tmp;
  tmp.sentence = std::string(sentence);
  const auto h = sentence.find(head);
  if (head.empty() || h == std::string_view::npos) return std::string(sentence);
  auto t = sentence.find(tail);
  while (t != std::string_view::npos && t < h + head.size() && t + tail.size() > h) {
    t = sentence.find(tail, t + 1);
  }
  if (tail.empty() || t == std::string_view::npos) return std::string(sentence);
  tmp.head = {std::string(head), h, h + head.size()};
  tmp.tail = {std::string(tail), t, t + tail.size()};
  return mark_entities(tmp);
}

std::string render_label_list(const std::vector<std::string>& labels) {
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i) out += '\n';
    out += "- ";
    out += labels[i];
  }
  return out;
}

std::string render_relation_table(const RelationInstance& instance,
                                  std::optional<std::string_view> relation) {
  return fmt::format("| head (e1) | tail (e2) | relation |\n|---|---|---|\n| {} | {} | {} |",
                     instance.head.text, instance.tail.text, relation ? *relation : "?");
}

SlotBindings instance_bindings(const RelationInstance& instance, const LabelSet& labels) {
  return SlotBindings{
      {"sentence", mark_entities(instance)},
      {"head", instance.head.text},
      {"tail", instance.tail.text},
      {"label_list", render_label_list(labels.labels())},
  };
}

// ---------------------------------------------------------------------------
// Parsers

std::string parse_label(std::string_view raw, const LabelSet& labels) {
  const auto whole = trim(raw);
  if (auto m = match_whole(whole, labels)) return *m;
  if (auto m = match_whole(strip_decoration(first_nonempty_line(whole)), labels)) return *m;

  const auto haystack = to_lower(whole);
  struct Hit {
    std::string label;
    std::string lowered;
    std::vector<std::size_t> positions;
  };
  std::vector<Hit> hits;
  for (const auto& l : labels.labels()) {
    auto lowered = to_lower(l);
    auto pos = occurrences(haystack, lowered);
    if (!pos.empty()) hits.push_back({l, std::move(lowered), std::move(pos)});
  }
  // Drop a label whose every occurrence sits inside an occurrence of a longer
  // hit, e.g. "member_of" inside "pers:org:member_of".
  std::vector<std::string> candidates;
  for (const auto& a : hits) {
    bool shadowed = std::all_of(a.positions.begin(), a.positions.end(), [&](std::size_t p) {
      return std::any_of(hits.begin(), hits.end(), [&](const Hit& b) {
        if (b.lowered.size() <= a.lowered.size()) return false;
        return std::any_of(b.positions.begin(), b.positions.end(), [&](std::size_t q) {
          return q <= p && p + a.lowered.size() <= q + b.lowered.size();
        });
      });
    });
    if (!shadowed) candidates.push_back(a.label);
  }
  if (candidates.size() == 1) return candidates.front();
  if (candidates.empty()) {
    throw Error(Errc::NoLabelFound,
                fmt::format("no permissible label in reply '{}'", whole.substr(0, 120)));
  }
  throw Error(Errc::AmbiguousLabel, fmt::format("reply names several labels: {}",
                                                fmt::join(candidates, ", ")));
}

Critique parse_critique(std::string_view raw) {
  Critique critique;
  critique.text = trim(raw);
  if (critique.text.empty()) return critique;
  auto first = to_lower(first_nonempty_line(critique.text));
  while (!first.empty() && (first.back() == '.' || first.back() == '!')) first.pop_back();
  if (trim(first) == "approved") return critique;

  critique.actionable = true;
  const auto lowered = to_lower(critique.text);
  const std::string_view marker = "suggested:";
  if (auto pos = lowered.rfind(marker); pos != std::string::npos) {
    auto rest = std::string_view(critique.text).substr(pos + marker.size());
    auto line = rest.substr(0, rest.find('\n'));
    auto label = strip_decoration(line);
    if (!label.empty()) critique.suggested_label = label;
  }
  return critique;
}

std::string_view to_string(Polarity p) {
  return p == Polarity::positive ? "positive" : "adversarial_negative";
}

std::string_view to_string(Provenance p) {
  return p == Provenance::generated ? "generated" : "retrieved";
}

void to_json(json& j, const GeneratedExample& e) {
  j = json{{"sentence", e.sentence},
           {"head_entity", e.head},
           {"tail_entity", e.tail},
           {"label", e.label},
           {"polarity", to_string(e.polarity)},
           {"provenance", to_string(e.provenance)}};
  j["source_id"] = e.source_id ? json(*e.source_id) : json(nullptr);
  j["similarity"] = e.similarity ? json(*e.similarity) : json(nullptr);
}

void from_json(const json& j, GeneratedExample& e) {
  j.at("sentence").get_to(e.sentence);
  j.at("head_entity").get_to(e.head);
  j.at("tail_entity").get_to(e.tail);
  j.at("label").get_to(e.label);
  e.polarity = j.at("polarity").get<std::string>() == "positive" ? Polarity::positive
                                                                   : Polarity::adversarial_negative;
  e.provenance = j.at("provenance").get<std::string>() == "generated" ? Provenance::generated
                                                                       : Provenance::retrieved;
  e.source_id.reset();
  e.similarity.reset();
  if (j.contains("source_id") && !j["source_id"].is_null()) e.source_id = j["source_id"].get<std::string>();
  if (j.contains("similarity") && !j["similarity"].is_null()) e.similarity = j["similarity"].get<double>();
}

namespace {

std::optional<json> recover_json_array(std::string_view raw) {
  auto direct = json::parse(raw, nullptr, false);
  if (!direct.is_discarded()) {
    if (direct.is_array()) return direct;
    if (direct.is_object() && direct.contains("examples") && direct["examples"].is_array()) {
      return direct["examples"];
    }
  }
  // Scan for a balanced [...] block that parses; handles prose and code fences.
  for (auto open = raw.find('['); open != std::string_view::npos; open = raw.find('[', open + 1)) {
    for (auto close = raw.rfind(']'); close != std::string_view::npos && close > open;
         close = close == 0 ? std::string_view::npos : raw.rfind(']', close - 1)) {
      auto candidate = json::parse(raw.substr(open, close - open + 1), nullptr, false);
      if (!candidate.is_discarded() && candidate.is_array()) return candidate;
    }
  }
  return std::nullopt;
}

}  // namespace

ParsedExamples parse_generated_examples(std::string_view raw, const LabelSet& labels,
                                        Polarity expected_polarity) {
  auto array = recover_json_array(raw);
  if (!array) {
    throw Error(Errc::MalformedExampleBlock,
                fmt::format("no JSON array in reply '{}'", trim(raw).substr(0, 120)));
  }
  ParsedExamples parsed;
  for (const auto& item : *array) {
    auto field = [&](const char* key) -> std::optional<std::string> {
      if (!item.is_object()) return std::nullopt;
      auto it = item.find(key);
      if (it == item.end() || !it->is_string()) return std::nullopt;
      auto value = it->get<std::string>();
      if (trim(value).empty()) return std::nullopt;
      return value;
    };
    auto sentence = field("sentence");
    auto head = field("head");
    auto tail = field("tail");
    auto label = field("label");
    std::optional<std::string> normalized;
    if (label) normalized = labels.normalize(*label);
    if (!sentence || !head || !tail || !normalized) {
      ++parsed.discarded;
      continue;
    }
    GeneratedExample example;
    example.sentence = std::move(*sentence);
    example.head = std::move(*head);
    example.tail = std::move(*tail);
    example.label = std::move(*normalized);
    example.polarity = expected_polarity;
    example.provenance = Provenance::generated;
    parsed.examples.push_back(std::move(example));
  }
  if (parsed.discarded > 0) {
    spdlog::warn("discarded {} of {} generated {} examples", parsed.discarded, array->size(),
                 to_string(expected_polarity));
  }
  return parsed;
}

std::optional<std::vector<long>> parse_index_list(std::string_view raw) {
  auto array = recover_json_array(raw);
  if (!array) return std::nullopt;
  std::vector<long> out;
  for (const auto& item : *array) {
    if (!item.is_number_integer()) return std::nullopt;
    out.push_back(item.get<long>());
  }
  return out;
}

Verdict parse_verdict(std::string_view raw) {
  Verdict verdict;
  const auto text = trim(raw);
  const auto first = to_lower(first_nonempty_line(text));
  if (first.rfind("accept", 0) == 0) {
    verdict.accepted = true;
    return verdict;
  }
  verdict.feedback = text;
  if (to_lower(text).rfind("reject", 0) == 0) {
    verdict.feedback = strip_decoration(std::string_view(text).substr(6));
  }
  return verdict;
}

}  // namespace relagent
