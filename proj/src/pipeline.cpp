#include "narrground/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "narrground/binary_io.hpp"
#include "narrground/error.hpp"
#include "narrground/jsonl.hpp"
#include "narrground/parallel.hpp"

namespace narrground::pipeline {

namespace {

FrameRef ref_from(const json& j) {
  return {j.at("doc_id").get<std::string>(), j.at("sent_idx").get<int>(),
          j.at("frame_idx").get<int>()};
}

void put_ref(json& j, const FrameRef& ref) {
  j["doc_id"] = ref.doc_id;
  j["sent_idx"] = ref.sent_idx;
  j["frame_idx"] = ref.frame_idx;
}

template <typename Fn>
auto with_line_context(const std::string& path, std::size_t line, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw FormatError(path + ":" + std::to_string(line) + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path + ":" + std::to_string(line) + ": " + e.what());
  }
}

std::string embedder_label(const Config& c) {
  return c.fallback_embedder() ? "hashing:" + std::to_string(c.embed_dim)
                               : "file";
}

}  // namespace

void Config::finalize() {
  if (no_extract) no_pie = true;
  if (!(threshold >= 0.0)) throw ConfigError("threshold must be >= 0");
  if (hops < 1) throw ConfigError("hops must be >= 1");
  if (embed_dim == 0) throw ConfigError("embed_dim must be positive");
  if (threads == 0) threads = 1;
  if (top_k < 0) throw ConfigError("top_k must be >= 0");
}

AbstractionCap Config::effective_cap() const {
  return no_pie ? AbstractionCap::kNone : cap;
}

std::string Config::mode() const {
  std::string m;
  auto add = [&](const char* flag) {
    if (!m.empty()) m += '+';
    m += flag;
  };
  if (no_extract) add("no_extract");
  if (no_norm) add("no_norm");
  if (no_pie) add("no_pie");
  return m.empty() ? "full" : m;
}

json Config::meta() const {
  return {{"embedder", embedder_label(*this)},
          {"backend", std::string(backend_name(backend))},
          {"mode", mode()},
          {"cap", std::string(cap_name(effective_cap()))},
          {"threshold", threshold},
          {"hops", hops}};
}

std::vector<SrlFrame> read_frames(const std::string& path) {
  std::vector<SrlFrame> frames;
  jsonl::for_each_line(path, [&](std::size_t line, std::string_view text) {
    frames.push_back(with_line_context(path, line, [&] {
      auto j = json::parse(text);
      return frame_from_json(j);
    }));
  });
  return frames;
}

std::vector<NormalizedEvent> read_normalized(const std::string& path) {
  std::vector<NormalizedEvent> events;
  jsonl::for_each_line(path, [&](std::size_t line, std::string_view text) {
    events.push_back(with_line_context(
        path, line, [&] { return event_from_json(json::parse(text)); }));
  });
  std::sort(events.begin(), events.end(),
            [](const auto& a, const auto& b) { return a.ref < b.ref; });
  return events;
}

std::vector<PartialRecord> read_partials(const std::string& path) {
  std::vector<PartialRecord> out;
  jsonl::for_each_line(path, [&](std::size_t line, std::string_view text) {
    out.push_back(with_line_context(path, line, [&] {
      auto j = json::parse(text);
      return PartialRecord{ref_from(j), j.at("level").get<int>(),
                           j.at("plain").get<std::string>(),
                           j.value("tagged", std::string())};
    }));
  });
  return out;
}

AnchorSets read_anchors(const std::string& path) {
  std::vector<AnchorMatch> matches;
  jsonl::for_each_line(path, [&](std::size_t line, std::string_view text) {
    matches.push_back(with_line_context(path, line, [&] {
      auto j = json::parse(text);
      return AnchorMatch{ref_from(j), j.at("level").get<int>(),
                         j.at("node_id").get<NodeId>(),
                         j.at("distance").get<double>()};
    }));
  });
  std::sort(matches.begin(), matches.end(), [](const auto& a, const auto& b) {
    return std::tie(a.event, a.level) < std::tie(b.event, b.level);
  });
  AnchorSets out;
  for (auto& m : matches) {
    if (out.events.empty() || out.events.back().event != m.event) {
      out.events.push_back({m.event, {}});
    }
    out.events.back().matches.push_back(std::move(m));
  }
  return out;
}

std::vector<JointSubgraph> read_joint(const std::string& path) {
  std::vector<JointSubgraph> out;
  jsonl::for_each_line(path, [&](std::size_t line, std::string_view text) {
    out.push_back(with_line_context(
        path, line, [&] { return joint_from_json(json::parse(text)); }));
  });
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.instance_id < b.instance_id;
  });
  return out;
}

std::vector<SentenceQuery> read_sentence_texts(const std::string& path,
                                               std::vector<ContextEvent>& out) {
  std::vector<SentenceQuery> queries;
  jsonl::for_each_line(path, [&](std::size_t line, std::string_view text) {
    with_line_context(path, line, [&] {
      auto j = json::parse(text);
      auto doc = j.at("doc_id").get<std::string>();
      const auto& sents = j.at("sentences");
      if (!sents.is_array() || sents.empty()) {
        throw FormatError("document without sentences");
      }
      for (std::size_t i = 0; i < sents.size(); ++i) {
        auto s = sents[i].get<std::string>();
        out.push_back({{doc, static_cast<int>(i), -1}, s});
        queries.push_back({doc, static_cast<int>(i), {}});
      }
      return 0;
    });
  });
  std::vector<std::size_t> order(out.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return out[a].ref < out[b].ref;
  });
  std::vector<ContextEvent> sorted_out;
  std::vector<SentenceQuery> sorted_q;
  for (auto i : order) {
    sorted_out.push_back(std::move(out[i]));
    sorted_q.push_back(std::move(queries[i]));
  }
  out = std::move(sorted_out);
  return sorted_q;
}

std::vector<Task> read_tasks(const std::string& path) {
  std::vector<Task> tasks;
  jsonl::for_each_line(path, [&](std::size_t line, std::string_view text) {
    tasks.push_back(with_line_context(path, line, [&] {
      auto j = json::parse(text);
      Task t{j.at("instance_id").get<std::string>(),
             j.value("question", std::string()),
             j.at("choices").get<std::vector<std::string>>()};
      if (t.choices.size() < 2) throw FormatError("task needs >= 2 choices");
      return t;
    }));
  });
  std::sort(tasks.begin(), tasks.end(), [](const auto& a, const auto& b) {
    return a.instance_id < b.instance_id;
  });
  return tasks;
}

std::vector<NormalizedEvent> normalize_frames(std::span<const SrlFrame> frames,
                                              bool skip_person_tokens,
                                              unsigned threads) {
  std::map<std::string, std::vector<const SrlFrame*>> by_doc;
  for (const auto& f : frames) by_doc[f.doc_id].push_back(&f);
  std::vector<std::vector<const SrlFrame*>> docs;
  for (auto& [_, fs] : by_doc) docs.push_back(std::move(fs));

  std::vector<std::vector<NormalizedEvent>> per_doc(docs.size());
  parallel_for(docs.size(), threads, [&](std::size_t d) {
    std::vector<SrlFrame> doc_frames;
    for (const auto* f : docs[d]) doc_frames.push_back(*f);
    auto index = build_person_index(doc_frames);
    for (const auto& f : doc_frames) {
      per_doc[d].push_back(skip_person_tokens ? passthrough_event(f)
                                              : normalize_event(f, index));
    }
  });
  std::vector<NormalizedEvent> out;
  for (auto& doc : per_doc) {
    for (auto& e : doc) out.push_back(std::move(e));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.ref < b.ref; });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].ref == out[i - 1].ref) {
      throw FormatError("duplicate frame " + out[i].ref.doc_id + "/" +
                        std::to_string(out[i].ref.sent_idx) + "/" +
                        std::to_string(out[i].ref.frame_idx));
    }
  }
  return out;
}

std::vector<PartialRecord> extract_partials(
    std::span<const NormalizedEvent> events, AbstractionCap cap) {
  std::vector<PartialRecord> out;
  for (const auto& e : events) {
    auto seq = extract_partial_events(e, cap);
    for (auto& p : seq.levels) {
      out.push_back({seq.ref, p.level, std::move(p.plain), std::move(p.tagged)});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.ref, a.level) < std::tie(b.ref, b.level);
  });
  return out;
}

Resources load_resources(const Config& config, bool with_index) {
  Resources res;
  if (!config.kg_snapshot.empty()) {
    res.store = KgStore::restore(binio::read_file(config.kg_snapshot));
  } else if (!config.kg_nodes.empty() && !config.kg_edges.empty()) {
    res.store = KgStore::load(config.kg_nodes, config.kg_edges);
  } else {
    throw ConfigError("no KG configured (kg_snapshot or kg_nodes + kg_edges)");
  }
  res.embedder = HashingEmbedder(config.embed_dim);
  if (!with_index) return res;

  EmbeddingMatrix matrix;
  if (config.fallback_embedder()) {
    std::vector<std::string> texts;
    texts.reserve(res.store.node_count());
    for (const auto& n : res.store.nodes()) texts.push_back(n.text);
    matrix = res.embedder.embed_all(texts);
  } else {
    matrix = EmbeddingMatrix::read(config.embeddings);
    matrix.check_attached_to(res.store);
  }
  IndexParams params;
  params.seed = config.seed;
  res.index = EventIndex::build(std::move(matrix), config.backend, params);
  return res;
}

AnchorSets ground_partials(const Resources& res,
                           std::span<const PartialRecord> partials,
                           const Config& config) {
  if (!res.index) throw InvariantError("grounding requires an index");
  std::vector<GroundQuery> queries;
  queries.reserve(partials.size());
  if (!config.query_embeddings.empty()) {
    auto q = EmbeddingMatrix::read(config.query_embeddings);
    q.validate();
    if (q.count() != partials.size()) {
      throw ConfigError("query embedding rows != partial records");
    }
    for (std::size_t i = 0; i < partials.size(); ++i) {
      if (q.ids[i] != i) throw ConfigError("query embedding ids must be 0..N-1");
      auto row = q.row(i);
      queries.push_back({partials[i].ref, partials[i].level, {row.begin(), row.end()}});
    }
  } else {
    if (!config.fallback_embedder()) {
      throw ConfigError(
          "KG embeddings come from a file; query embeddings must too "
          "(query_embeddings)");
    }
    for (const auto& p : partials) {
      queries.push_back({p.ref, p.level, res.embedder.embed(p.plain)});
    }
  }
  return ground(*res.index, queries, config.threshold, config.threads);
}

AnchorSets ground_sentences(const Resources& res,
                            std::span<const SentenceQuery> sentences,
                            const Config& config) {
  if (!res.index) throw InvariantError("grounding requires an index");
  if (!config.fallback_embedder()) {
    throw ConfigError("whole-sentence grounding with an embedding file is not "
                      "supported; embed sentences with the adapter instead");
  }
  return sentence_ground(*res.index, sentences, config.threshold, config.threads);
}

std::vector<ContextEvent> context_events(std::span<const NormalizedEvent> events) {
  std::vector<ContextEvent> out;
  for (const auto& e : events) {
    out.push_back({e.ref, render_text(e, RenderStyle::kPlain)});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.ref < b.ref; });
  return out;
}

std::vector<JointSubgraph> build_joint_graphs(const KgStore& store,
                                              std::span<const ContextEvent> contexts,
                                              const AnchorSets& anchors,
                                              const Config& config) {
  std::map<std::string, std::vector<ContextEvent>> ctx_by_doc;
  for (const auto& c : contexts) ctx_by_doc[c.ref.doc_id].push_back(c);
  std::map<std::string, AnchorSets> anchors_by_doc;
  for (const auto& e : anchors.events) {
    if (!ctx_by_doc.contains(e.event.doc_id)) {
      throw InvariantError("anchors reference unknown document " + e.event.doc_id);
    }
    anchors_by_doc[e.event.doc_id].events.push_back(e);
  }
  std::vector<std::string> docs;
  for (const auto& [doc, _] : ctx_by_doc) docs.push_back(doc);

  std::vector<JointSubgraph> out(docs.size());
  // Parallel over documents; each retrieval then runs single-threaded.
  parallel_for(docs.size(), config.threads, [&](std::size_t d) {
    const auto& doc_anchors = anchors_by_doc[docs[d]];
    auto sub = retrieve_subgraph(store, doc_anchors, config.hops, 1);
    out[d] = build_joint_graph(store, sub, ctx_by_doc.at(docs[d]), doc_anchors,
                               docs[d]);
  });
  return out;
}

std::vector<json> normalized_records(std::span<const NormalizedEvent> events) {
  std::vector<json> out;
  for (const auto& e : events) out.push_back(event_to_json(e));
  return out;
}

std::vector<json> partial_records(std::span<const PartialRecord> partials) {
  std::vector<json> out;
  for (const auto& p : partials) {
    json j;
    put_ref(j, p.ref);
    j["level"] = p.level;
    j["tagged"] = p.tagged;
    j["plain"] = p.plain;
    out.push_back(std::move(j));
  }
  return out;
}

std::vector<json> anchor_records(const AnchorSets& anchors, const Config& config) {
  std::vector<json> out;
  const auto meta = config.meta();
  for (const auto& e : anchors.events) {
    for (const auto& m : e.matches) {
      json j;
      put_ref(j, m.event);
      j["level"] = m.level;
      j["node_id"] = m.node;
      j["distance"] = m.distance;
      j["meta"] = meta;
      out.push_back(std::move(j));
    }
  }
  return out;
}

std::vector<json> joint_records(std::span<const JointSubgraph> graphs,
                                const Config& config) {
  std::vector<json> out;
  const auto meta = config.meta();
  for (const auto& g : graphs) {
    auto j = joint_to_json(g);
    j["meta"] = meta;
    out.push_back(std::move(j));
  }
  return out;
}

namespace {

const JointSubgraph& graph_for(std::span<const JointSubgraph> graphs,
                               const std::string& doc) {
  for (const auto& g : graphs) {
    if (g.instance_id == doc) return g;
  }
  throw ConfigError("task references unknown instance '" + doc + "'");
}

}  // namespace

std::vector<json> serialize_records(std::span<const JointSubgraph> graphs,
                                    std::span<const Task> tasks,
                                    const Config& config) {
  SerializeOptions opts{config.variant, config.relation_labels};
  const auto meta = config.meta();
  const std::string variant(variant_name(config.variant));
  std::vector<json> out;
  for (const auto& g : graphs) {
    out.push_back({{"instance_id", g.instance_id},
                   {"kind", "graph"},
                   {"variant", variant},
                   {"text", serialize(g, opts)},
                   {"meta", meta}});
  }
  for (const auto& t : tasks) {
    PromptSpec spec;
    spec.question = t.question;
    for (const auto& doc : t.choices) {
      spec.choice_blocks.push_back(serialize(graph_for(graphs, doc), opts));
    }
    out.push_back({{"instance_id", t.instance_id},
                   {"kind", "prompt"},
                   {"variant", variant},
                   {"text", build_prompt(spec)},
                   {"meta", meta}});
  }
  return out;
}

rgcn::Mat node_features(const JointSubgraph& graph, const Resources& res,
                        const Config& config) {
  const auto dim = static_cast<Eigen::Index>(
      res.index && !config.fallback_embedder() ? res.index->dim()
                                               : res.embedder.dim());
  rgcn::Mat h(static_cast<Eigen::Index>(graph.nodes.size()), dim);
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const auto& n = graph.nodes[i];
    std::vector<float> v;
    if (!n.is_context && res.index && !config.fallback_embedder()) {
      auto row = res.index->matrix().row(n.kg_id);
      v.assign(row.begin(), row.end());
    } else {
      v = res.embedder.embed(n.text);
    }
    if (static_cast<Eigen::Index>(v.size()) != dim) {
      throw ConfigError("embedding file dimension differs from embed_dim; "
                        "node features would mix widths");
    }
    for (Eigen::Index k = 0; k < dim; ++k) {
      h(static_cast<Eigen::Index>(i), k) = v[k];
    }
  }
  return h;
}

std::vector<json> score_records(std::span<const JointSubgraph> graphs,
                                std::span<const Task> tasks,
                                const rgcn::RgcnParams& params,
                                const Resources& res, const Config& config) {
  const auto graph_dim = params.layers.back().out_dim();
  const auto text_dim =
      params.head.projection ? params.head.projection->rows() : graph_dim;
  if (text_dim != static_cast<Eigen::Index>(config.embed_dim)) {
    throw ConfigError("scorer expects text vectors of width " +
                      std::to_string(text_dim) + " but embed_dim is " +
                      std::to_string(config.embed_dim));
  }
  auto meta = config.meta();
  meta["text_encoder"] = "hashing:" + std::to_string(config.embed_dim);
  std::vector<json> out;
  for (const auto& t : tasks) {
    std::vector<rgcn::ChoiceInput> inputs;
    std::vector<const JointSubgraph*> used;
    for (const auto& doc : t.choices) {
      const auto& g = graph_for(graphs, doc);
      std::string story;
      for (const auto& n : g.nodes) {
        if (!n.is_context) continue;
        if (!story.empty()) story += ' ';
        story += n.text;
      }
      auto s = res.embedder.embed(story);
      rgcn::Vec text(static_cast<Eigen::Index>(s.size()));
      for (std::size_t k = 0; k < s.size(); ++k) text(static_cast<Eigen::Index>(k)) = s[k];
      inputs.push_back({std::move(text), rgcn::relational_graph(g, params),
                        node_features(g, res, config)});
      used.push_back(&g);
    }
    auto dist = rgcn::score_choices(inputs, params);
    json logits = json::array();
    json attention = json::array();
    for (std::size_t c = 0; c < dist.choices.size(); ++c) {
      logits.push_back(dist.choices[c].logit);
      const auto& w = dist.choices[c].pooled.weights;
      if (w.empty()) continue;
      std::vector<std::size_t> order(w.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(),
                       [&](auto a, auto b) { return w[a] > w[b]; });
      json top = json::array();
      for (std::size_t i = 0; i < order.size() && i < static_cast<std::size_t>(config.top_k); ++i) {
        const auto& n = used[c]->nodes[order[i]];
        top.push_back({{"id", n.id}, {"text", n.text}, {"weight", w[order[i]]}});
      }
      attention.push_back({{"choice", c}, {"nodes", top}});
    }
    json j = {{"instance_id", t.instance_id},
              {"logits", logits},
              {"probabilities", dist.probabilities},
              {"argmax", dist.argmax},
              {"meta", meta}};
    if (!attention.empty()) j["attention"] = attention;
    out.push_back(std::move(j));
  }
  return out;
}

json stats_record(std::uint64_t queries, std::size_t source_events,
                  const AnchorSets& anchors,
                  std::span<const JointSubgraph> graphs, const Config& config) {
  auto stats = grounding_stats(anchors, queries);
  json j = {{"mode", config.mode()},
            {"queries", stats.queries},
            {"hits", stats.hits},
            {"hit_rate", stats.hit_rate},
            {"mean_distance", stats.mean_distance ? json(*stats.mean_distance)
                                                  : json(nullptr)},
            {"source_events", source_events},
            {"grounded_events", anchors.events.size()},
            {"event_hit_rate",
             source_events == 0 ? 0.0
                                : static_cast<double>(anchors.events.size()) /
                                      static_cast<double>(source_events)}};
  if (!graphs.empty()) {
    double v_sub = 0, e_sub = 0, v_joint = 0, e_joint = 0;
    for (const auto& g : graphs) {
      std::set<std::string> sub_nodes;
      for (const auto& e : g.edges) {
        if (e.rel == kGroundingRelation || e.rel == kContextRelation) continue;
        e_sub += 1;
        sub_nodes.insert(e.src);
        sub_nodes.insert(e.dst);
      }
      v_sub += static_cast<double>(sub_nodes.size());
      v_joint += static_cast<double>(g.nodes.size());
      e_joint += static_cast<double>(g.edges.size());
    }
    const auto n = static_cast<double>(graphs.size());
    j["instances"] = graphs.size();
    j["mean_v_sub"] = v_sub / n;
    j["mean_e_sub"] = e_sub / n;
    j["mean_v_joint"] = v_joint / n;
    j["mean_e_joint"] = e_joint / n;
  }
  j["meta"] = config.meta();
  return j;
}

std::vector<std::string> run_pipeline(const Config& config) {
  if (config.out_dir.empty()) throw ConfigError("pipeline needs out_dir");
  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);
  std::vector<std::string> written;
  auto emit = [&](const std::string& name, const std::string& bytes) {
    binio::write_file((fs::path(config.out_dir) / name).string(), bytes);
    written.push_back(name);
  };
  try {
    auto res = load_resources(config);
    std::vector<ContextEvent> contexts;
    AnchorSets anchors;
    std::uint64_t queries = 0;
    if (config.no_extract) {
      if (config.sentences.empty()) {
        throw ConfigError("no_extract needs a sentences file");
      }
      auto sentence_queries = read_sentence_texts(config.sentences, contexts);
      for (std::size_t i = 0; i < sentence_queries.size(); ++i) {
        sentence_queries[i].vector = res.embedder.embed(contexts[i].text);
      }
      anchors = ground_sentences(res, sentence_queries, config);
      queries = sentence_queries.size();
    } else {
      if (config.events.empty()) throw ConfigError("pipeline needs an events file");
      auto frames = read_frames(config.events);
      auto events = normalize_frames(frames, config.no_norm, config.threads);
      emit("normalized.jsonl", jsonl::dump(normalized_records(events)));
      auto partials = extract_partials(events, config.effective_cap());
      emit("partials.jsonl", jsonl::dump(partial_records(partials)));
      anchors = ground_partials(res, partials, config);
      queries = partials.size();
      contexts = context_events(events);
    }
    emit("anchors.jsonl", jsonl::dump(anchor_records(anchors, config)));
    auto graphs = build_joint_graphs(res.store, contexts, anchors, config);
    emit("joint.jsonl", jsonl::dump(joint_records(graphs, config)));
    std::vector<Task> tasks;
    if (!config.tasks.empty()) tasks = read_tasks(config.tasks);
    emit("serialized.jsonl", jsonl::dump(serialize_records(graphs, tasks, config)));
    if (!config.params.empty()) {
      if (tasks.empty()) throw ConfigError("scoring needs a tasks file");
      auto params = rgcn::RgcnParams::read(config.params);
      emit("scores.jsonl",
           jsonl::dump(score_records(graphs, tasks, params, res, config)));
    }
    emit("stats.json",
         stats_record(queries, contexts.size(), anchors, graphs, config).dump() + "\n");
  } catch (...) {
    for (const auto& name : written) {
      std::error_code ec;
      fs::remove(fs::path(config.out_dir) / name, ec);
    }
    throw;
  }
  return written;
}

}  // namespace narrground::pipeline
