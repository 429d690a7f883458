#pragma once
// Semantic-role frames, person-token normalization and the argument-dropping
// abstraction ladder.

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace narrground {

struct PersonSpan {
  int start = 0;  // token offsets in the source sentence, [start, end)
  int end = 0;
  int cluster = 0;  // document-scoped coreference cluster
  bool possessive = false;
};

struct Argument {
  std::string role;  // ARG0..ARG5 or ARGM-*
  std::string text;  // whitespace-separated tokens start..end
  int start = 0;
  int end = 0;
  std::vector<PersonSpan> person_spans;
};

struct Verb {
  std::string text;
  std::string lemma;
  // Token offset of the trigger; -1 when the producer did not supply one, in
  // which case the verb renders directly after ARG0 (or first).
  int position = -1;
};

struct SrlFrame {
  std::string doc_id;
  int sent_idx = 0;
  int frame_idx = 0;
  Verb verb;
  std::vector<Argument> args;
  bool negated = false;
  std::optional<std::string> modal;
};

// Identity of a source event. frame_idx == -1 denotes a whole sentence
// (sentence-level grounding mode).
struct FrameRef {
  std::string doc_id;
  int sent_idx = 0;
  int frame_idx = 0;

  auto operator<=>(const FrameRef&) const = default;
  bool operator==(const FrameRef&) const = default;
};

// Ordered as the ladder drops them: ARGM < ARG2/3/4 < ARG1 < ARG0.
enum class AbstractionCap { kNone = 0, kArgm, kArg234, kArg1, kArg0 };

AbstractionCap parse_cap(std::string_view name);
std::string_view cap_name(AbstractionCap cap);

class PersonIndex {
 public:
  // Ordinal for a cluster; nullopt if the cluster never appeared.
  std::optional<int> ordinal(int cluster) const;
  void assign(int cluster);  // no-op if already numbered
  std::size_t size() const { return ordinals_.size(); }
  const std::map<int, int>& ordinals() const { return ordinals_; }

 private:
  std::map<int, int> ordinals_;
};

struct EventArgument {
  std::string role;
  std::string text;  // person mentions already rewritten
  int start = 0;
  bool kept_always = false;  // negation or modal modifier
};

struct NormalizedEvent {
  FrameRef ref;
  std::string verb_text;
  std::string verb_lemma;
  int verb_position = -1;
  std::vector<EventArgument> args;  // sorted by start offset
  bool negated = false;
  std::optional<std::string> modal;
};

struct PartialEvent {
  int level = 0;
  std::vector<std::size_t> retained;  // indices into NormalizedEvent::args
  std::string plain;
  std::string tagged;
};

struct PartialEventSequence {
  FrameRef ref;
  std::vector<PartialEvent> levels;
};

enum class RenderStyle { kPlain, kRoleTagged };

// Numbers person clusters 0,1,2,... by first appearance in
// (sent_idx, frame_idx, argument start, span start) order. Frames are assumed
// to come from a single document.
PersonIndex build_person_index(std::span<const SrlFrame> frames);

// Rewrites each person span to [Pk] or [Pk's]. Throws FormatError for a
// cluster missing from the index or a span/token-count mismatch.
NormalizedEvent normalize_event(const SrlFrame& frame,
                                const PersonIndex& index);

// Same structure without touching person spans ("w/o norm." mode).
NormalizedEvent passthrough_event(const SrlFrame& frame);

PartialEventSequence extract_partial_events(const NormalizedEvent& event,
                                            AbstractionCap cap);

std::string render_text(const NormalizedEvent& event, RenderStyle style);
std::string render_text(const NormalizedEvent& event,
                        const PartialEvent& partial, RenderStyle style);

// Validation + conversion for the line-delimited events file.
SrlFrame frame_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json frame_to_json(const SrlFrame& frame);

// Normalized-event records keep the argument structure so the ladder can be
// rebuilt from them; they also carry both renderings for readers.
nlohmann::ordered_json event_to_json(const NormalizedEvent& event);
NormalizedEvent event_from_json(const nlohmann::ordered_json& j);

}  // namespace narrground
