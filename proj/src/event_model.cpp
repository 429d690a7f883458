#include "narrground/event_model.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>
#include <sstream>

#include "narrground/error.hpp"

namespace narrground {

namespace {

using json = nlohmann::ordered_json;

constexpr std::array<std::string_view, 4> kNegationWords = {
    "not", "n't", "never", "no longer"};

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

bool is_modifier(std::string_view role) { return role.starts_with("ARGM"); }

bool valid_role(std::string_view role) {
  if (role.size() == 4 && role.starts_with("ARG") && role[3] >= '0' &&
      role[3] <= '5') {
    return true;
  }
  return role == "ARGM" || role.starts_with("ARGM-");
}

// 1 = ARGM, 2 = ARG2..ARG5, 3 = ARG1, 4 = ARG0.
int drop_tier(std::string_view role) {
  if (is_modifier(role)) return 1;
  if (role == "ARG0") return 4;
  if (role == "ARG1") return 3;
  return 2;
}

bool kept_always(const SrlFrame& frame, const Argument& arg) {
  if (!is_modifier(arg.role)) return false;
  if (arg.role == "ARGM-NEG" || arg.role == "ARGM-MOD") return true;
  auto text = lower(arg.text);
  if (frame.negated &&
      std::find(kNegationWords.begin(), kNegationWords.end(), text) !=
          kNegationWords.end()) {
    return true;
  }
  return frame.modal && text == lower(*frame.modal);
}

// Keeps sentence punctuation glued to the last token of a replaced span.
std::string trailing_punct(std::string_view token) {
  std::size_t i = token.size();
  while (i > 0 && std::string_view(".,;:!?").find(token[i - 1]) !=
                      std::string_view::npos) {
    --i;
  }
  return std::string(token.substr(i));
}

std::string person_token(int ordinal, bool possessive) {
  return "[P" + std::to_string(ordinal) + (possessive ? "'s]" : "]");
}

NormalizedEvent skeleton(const SrlFrame& frame) {
  NormalizedEvent ev;
  ev.ref = {frame.doc_id, frame.sent_idx, frame.frame_idx};
  ev.verb_text = frame.verb.text;
  ev.verb_lemma = frame.verb.lemma;
  ev.verb_position = frame.verb.position;
  ev.negated = frame.negated;
  ev.modal = frame.modal;
  return ev;
}

void sort_args(std::vector<EventArgument>& args) {
  std::stable_sort(args.begin(), args.end(),
                   [](const auto& a, const auto& b) { return a.start < b.start; });
}

std::string_view display_role(std::string_view role) {
  return is_modifier(role) ? std::string_view("ARGM") : role;
}

std::string render(const NormalizedEvent& event,
                   std::span<const std::size_t> retained, RenderStyle style) {
  // Order key for the verb; arguments use their start offsets.
  double verb_key = -1.0;
  if (event.verb_position >= 0) {
    verb_key = event.verb_position;
  } else {
    for (const auto& a : event.args) {
      if (a.role == "ARG0") verb_key = a.start + 0.5;
    }
  }
  struct Segment {
    double key;
    std::string_view role;
    std::string_view text;
  };
  std::vector<Segment> segments;
  segments.push_back({verb_key, "V", event.verb_text});
  for (auto i : retained) {
    const auto& a = event.args[i];
    segments.push_back({static_cast<double>(a.start), a.role, a.text});
  }
  std::stable_sort(segments.begin(), segments.end(),
                   [](const auto& a, const auto& b) { return a.key < b.key; });
  std::string out;
  for (const auto& s : segments) {
    if (!out.empty()) out += ' ';
    if (style == RenderStyle::kRoleTagged) {
      out += display_role(s.role);
      out += ": ";
    }
    out += s.text;
  }
  return out;
}

}  // namespace

AbstractionCap parse_cap(std::string_view name) {
  auto n = lower(name);
  if (n == "none") return AbstractionCap::kNone;
  if (n == "argm") return AbstractionCap::kArgm;
  if (n == "arg234") return AbstractionCap::kArg234;
  if (n == "arg1") return AbstractionCap::kArg1;
  if (n == "arg0") return AbstractionCap::kArg0;
  throw ConfigError("unknown abstraction cap '" + std::string(name) +
                    "' (expected NONE, ARGM, ARG234, ARG1 or ARG0)");
}

std::string_view cap_name(AbstractionCap cap) {
  switch (cap) {
    case AbstractionCap::kNone: return "NONE";
    case AbstractionCap::kArgm: return "ARGM";
    case AbstractionCap::kArg234: return "ARG234";
    case AbstractionCap::kArg1: return "ARG1";
    case AbstractionCap::kArg0: return "ARG0";
  }
  return "?";
}

std::optional<int> PersonIndex::ordinal(int cluster) const {
  auto it = ordinals_.find(cluster);
  if (it == ordinals_.end()) return std::nullopt;
  return it->second;
}

void PersonIndex::assign(int cluster) {
  ordinals_.try_emplace(cluster, static_cast<int>(ordinals_.size()));
}

PersonIndex build_person_index(std::span<const SrlFrame> frames) {
  struct Mention {
    int sent, frame, arg_start, span_start, cluster;
    auto operator<=>(const Mention&) const = default;
  };
  std::vector<Mention> mentions;
  for (const auto& f : frames) {
    for (const auto& a : f.args) {
      for (const auto& p : a.person_spans) {
        mentions.push_back({f.sent_idx, f.frame_idx, a.start, p.start, p.cluster});
      }
    }
  }
  std::sort(mentions.begin(), mentions.end());
  PersonIndex index;
  for (const auto& m : mentions) index.assign(m.cluster);
  return index;
}

NormalizedEvent normalize_event(const SrlFrame& frame,
                                const PersonIndex& index) {
  auto ev = skeleton(frame);
  for (const auto& arg : frame.args) {
    auto tokens = split_tokens(arg.text);
    if (static_cast<int>(tokens.size()) != arg.end - arg.start) {
      throw FormatError("argument '" + arg.text + "' has " +
                        std::to_string(tokens.size()) +
                        " tokens but spans [" + std::to_string(arg.start) +
                        ", " + std::to_string(arg.end) + ")");
    }
    auto spans = arg.person_spans;
    std::sort(spans.begin(), spans.end(),
              [](const auto& a, const auto& b) { return a.start < b.start; });
    std::string text;
    int pos = arg.start;
    auto emit = [&](const std::string& tok) {
      if (!text.empty()) text += ' ';
      text += tok;
    };
    for (const auto& span : spans) {
      auto ord = index.ordinal(span.cluster);
      if (!ord) {
        throw FormatError("person cluster " + std::to_string(span.cluster) +
                          " missing from the document's person index");
      }
      for (; pos < span.start; ++pos) emit(tokens[pos - arg.start]);
      emit(person_token(*ord, span.possessive) +
           trailing_punct(tokens[span.end - 1 - arg.start]));
      pos = span.end;
    }
    for (; pos < arg.end; ++pos) emit(tokens[pos - arg.start]);
    ev.args.push_back({arg.role, text, arg.start, kept_always(frame, arg)});
  }
  sort_args(ev.args);
  return ev;
}

NormalizedEvent passthrough_event(const SrlFrame& frame) {
  auto ev = skeleton(frame);
  for (const auto& arg : frame.args) {
    ev.args.push_back({arg.role, arg.text, arg.start, kept_always(frame, arg)});
  }
  sort_args(ev.args);
  return ev;
}

PartialEventSequence extract_partial_events(const NormalizedEvent& event,
                                            AbstractionCap cap) {
  const int max_tier = static_cast<int>(cap);
  std::vector<std::size_t> drop_order;
  for (int tier = 1; tier <= max_tier; ++tier) {
    // Rightmost first within a tier.
    for (std::size_t i = event.args.size(); i-- > 0;) {
      const auto& a = event.args[i];
      if (!a.kept_always && drop_tier(a.role) == tier) drop_order.push_back(i);
    }
  }

  PartialEventSequence seq;
  seq.ref = event.ref;
  std::vector<std::size_t> retained(event.args.size());
  for (std::size_t i = 0; i < retained.size(); ++i) retained[i] = i;
  std::set<std::string> seen;

  auto push_level = [&](int level) {
    auto plain = render(event, retained, RenderStyle::kPlain);
    if (!seen.insert(plain).second) return;
    seq.levels.push_back({level, retained, std::move(plain),
                          render(event, retained, RenderStyle::kRoleTagged)});
  };
  push_level(0);
  int level = 0;
  for (auto idx : drop_order) {
    std::erase(retained, idx);
    push_level(++level);
  }
  return seq;
}

std::string render_text(const NormalizedEvent& event, RenderStyle style) {
  std::vector<std::size_t> all(event.args.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return render(event, all, style);
}

std::string render_text(const NormalizedEvent& event,
                        const PartialEvent& partial, RenderStyle style) {
  return render(event, partial.retained, style);
}

SrlFrame frame_from_json(const json& j) {
  auto bad = [](const std::string& why) {
    return FormatError("invalid frame: " + why);
  };
  if (!j.is_object()) throw bad("not an object");
  SrlFrame f;
  try {
    f.doc_id = j.at("doc_id").get<std::string>();
    f.sent_idx = j.at("sent_idx").get<int>();
    f.frame_idx = j.at("frame_idx").get<int>();
    const auto& v = j.at("verb");
    f.verb.text = v.at("text").get<std::string>();
    f.verb.lemma = v.value("lemma", f.verb.text);
    f.verb.position = v.value("start", -1);
    f.negated = j.value("negated", false);
    if (auto m = j.find("modal"); m != j.end() && !m->is_null()) {
      f.modal = m->get<std::string>();
    }
    for (const auto& ja : j.at("args")) {
      Argument a;
      a.role = ja.at("role").get<std::string>();
      a.text = ja.at("text").get<std::string>();
      a.start = ja.at("start").get<int>();
      a.end = ja.at("end").get<int>();
      for (const auto& jp : ja.value("person_spans", json::array())) {
        a.person_spans.push_back({jp.at("start").get<int>(),
                                  jp.at("end").get<int>(),
                                  jp.at("cluster").get<int>(),
                                  jp.value("possessive", false)});
      }
      f.args.push_back(std::move(a));
    }
  } catch (const json::exception& e) {
    throw bad(e.what());
  }

  if (f.doc_id.empty()) throw bad("empty doc_id");
  if (f.verb.text.empty()) throw bad("empty verb");
  std::vector<std::pair<int, int>> ranges;
  for (const auto& a : f.args) {
    if (!valid_role(a.role)) throw bad("unsupported role '" + a.role + "'");
    if (a.start < 0 || a.end <= a.start) throw bad("empty argument span");
    for (const auto& p : a.person_spans) {
      if (p.start < a.start || p.end > a.end || p.end <= p.start) {
        throw bad("person span outside its argument");
      }
    }
    ranges.emplace_back(a.start, a.end);
  }
  std::sort(ranges.begin(), ranges.end());
  for (std::size_t i = 1; i < ranges.size(); ++i) {
    if (ranges[i].first < ranges[i - 1].second) {
      throw bad("overlapping argument spans");
    }
  }
  return f;
}

json frame_to_json(const SrlFrame& f) {
  json args = json::array();
  for (const auto& a : f.args) {
    json spans = json::array();
    for (const auto& p : a.person_spans) {
      spans.push_back({{"start", p.start}, {"end", p.end},
                       {"cluster", p.cluster}, {"possessive", p.possessive}});
    }
    args.push_back({{"role", a.role}, {"text", a.text}, {"start", a.start},
                    {"end", a.end}, {"person_spans", spans}});
  }
  json verb = {{"text", f.verb.text}, {"lemma", f.verb.lemma}};
  if (f.verb.position >= 0) verb["start"] = f.verb.position;
  json j = {{"doc_id", f.doc_id}, {"sent_idx", f.sent_idx},
            {"frame_idx", f.frame_idx}, {"verb", verb}, {"args", args},
            {"negated", f.negated}};
  j["modal"] = f.modal ? json(*f.modal) : json(nullptr);
  return j;
}

json event_to_json(const NormalizedEvent& ev) {
  json args = json::array();
  for (const auto& a : ev.args) {
    args.push_back({{"role", a.role}, {"text", a.text}, {"start", a.start},
                    {"kept", a.kept_always}});
  }
  json j = {{"doc_id", ev.ref.doc_id},
            {"sent_idx", ev.ref.sent_idx},
            {"frame_idx", ev.ref.frame_idx},
            {"verb", {{"text", ev.verb_text},
                      {"lemma", ev.verb_lemma},
                      {"start", ev.verb_position}}},
            {"args", args},
            {"negated", ev.negated}};
  j["modal"] = ev.modal ? json(*ev.modal) : json(nullptr);
  j["level"] = 0;
  j["plain"] = render_text(ev, RenderStyle::kPlain);
  j["tagged"] = render_text(ev, RenderStyle::kRoleTagged);
  return j;
}

NormalizedEvent event_from_json(const json& j) {
  NormalizedEvent ev;
  try {
    ev.ref = {j.at("doc_id").get<std::string>(), j.at("sent_idx").get<int>(),
              j.at("frame_idx").get<int>()};
    const auto& v = j.at("verb");
    ev.verb_text = v.at("text").get<std::string>();
    ev.verb_lemma = v.value("lemma", ev.verb_text);
    ev.verb_position = v.value("start", -1);
    for (const auto& a : j.at("args")) {
      ev.args.push_back({a.at("role").get<std::string>(),
                         a.at("text").get<std::string>(),
                         a.at("start").get<int>(), a.value("kept", false)});
    }
    ev.negated = j.value("negated", false);
    if (auto m = j.find("modal"); m != j.end() && !m->is_null()) {
      ev.modal = m->get<std::string>();
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid normalized event: ") + e.what());
  }
  for (const auto& a : ev.args) {
    if (!valid_role(a.role)) {
      throw FormatError("invalid normalized event: unsupported role '" +
                        a.role + "'");
    }
  }
  sort_args(ev.args);
  return ev;
}

}  // namespace narrground
