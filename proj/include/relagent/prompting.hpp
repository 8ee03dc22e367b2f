#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "relagent/backend.hpp"
#include "relagent/types.hpp"

namespace relagent {

enum class TemplateRole {
  baseline_classifier,
  generator,
  reflector,
  orchestrator_router,
  orchestrator_verifier,
  specialist,
  example_generator,
  example_selector,
  dyn_classifier,
};

std::string_view to_string(TemplateRole r);
TemplateRole parse_template_role(std::string_view name);
const std::vector<TemplateRole>& all_template_roles();

using SlotBindings = std::map<std::string, std::string, std::less<>>;

/// System and user text with `{slot}` markers. A marker is a brace pair
/// around a lowercase identifier; any other brace text is literal.
struct PromptTemplate {
  TemplateRole role = TemplateRole::baseline_classifier;
  std::string system_text;
  std::string user_text;

  /// Sorted, de-duplicated slot names referenced by either text.
  std::vector<std::string> slots() const;

  /// Template file layout: a `[system]` line, the system text, a `[user]`
  /// line, the user text.
  static PromptTemplate parse(TemplateRole role, std::string_view file_text);
  std::string serialize() const;
};

/// Substitutes every slot; throws UnboundSlot naming the first missing one.
ChatRequest render_prompt(const PromptTemplate& tmpl, const SlotBindings& bindings,
                          std::string model_id = {}, double temperature = 0.0);

/// Prompt templates for every role. Files under `<dir>/<dataset>/<role>.txt`
/// override `<dir>/<role>.txt`, which override the compiled-in defaults.
class TemplateSet {
public:
  static TemplateSet builtin();
  static TemplateSet load(const std::filesystem::path& dir, DatasetId dataset);

  const PromptTemplate& get(TemplateRole role) const;
  void set(PromptTemplate tmpl);

  /// role name -> SHA-256 of the serialized template, for run manifests.
  std::map<std::string, std::string> hashes() const;

private:
  std::map<TemplateRole, PromptTemplate> templates_;
};

/// Sentence with `<e1>`/`<e2>` tags around the head and tail spans.
std::string mark_entities(const RelationInstance& instance);
/// Same, locating the first occurrence of each surface form.
std::string mark_surface(std::string_view sentence, std::string_view head, std::string_view tail);

/// Newline-separated "- label" lines in label-set order.
std::string render_label_list(const std::vector<std::string>& labels);

/// One-row relation table: head | tail | relation.
std::string render_relation_table(const RelationInstance& instance,
                                  std::optional<std::string_view> relation);

/// sentence, head, tail and label_list slots for `instance`.
SlotBindings instance_bindings(const RelationInstance& instance, const LabelSet& labels);

/// Strict label extraction: exact match, then case-insensitive match of the
/// whole reply or its first line, then a unique case-insensitive substring.
/// Throws NoLabelFound or AmbiguousLabel (listing every candidate).
std::string parse_label(std::string_view raw, const LabelSet& labels);

struct Critique {
  bool actionable = false;
  std::string text;
  std::optional<std::string> suggested_label;

  bool operator==(const Critique&) const = default;
};

/// First line APPROVED (any case) or an empty reply means no actionable
/// critique. A "SUGGESTED: <label>" marker fills suggested_label.
Critique parse_critique(std::string_view raw);

enum class Polarity { positive, adversarial_negative };
enum class Provenance { generated, retrieved };

std::string_view to_string(Polarity p);
std::string_view to_string(Provenance p);

struct GeneratedExample {
  std::string sentence;
  std::string head;
  std::string tail;
  std::string label;
  Polarity polarity = Polarity::positive;
  Provenance provenance = Provenance::generated;
  std::optional<std::string> source_id;
  std::optional<double> similarity;

  bool operator==(const GeneratedExample&) const = default;
};

void to_json(json& j, const GeneratedExample& e);
void from_json(const json& j, GeneratedExample& e);

struct ParsedExamples {
  std::vector<GeneratedExample> examples;
  std::size_t discarded = 0;
};

/// Recovers a JSON array of {sentence, head, tail, label} objects from the
/// reply; items with unknown labels or missing fields are discarded and
/// counted. Throws MalformedExampleBlock when no array is recoverable.
ParsedExamples parse_generated_examples(std::string_view raw, const LabelSet& labels,
                                        Polarity expected_polarity);

/// First JSON array of integers in the reply, or nullopt.
std::optional<std::vector<long>> parse_index_list(std::string_view raw);

struct Verdict {
  bool accepted = false;
  std::string feedback;
};

/// First line starting with ACCEPT (any case) accepts; anything else rejects
/// and the remaining text becomes feedback.
Verdict parse_verdict(std::string_view raw);

}  // namespace relagent
