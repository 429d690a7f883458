// Python bindings. Structured records cross the boundary as JSON text; the
// package's __init__ turns them into plain dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "narrground/error.hpp"
#include "narrground/event_model.hpp"
#include "narrground/jsonl.hpp"
#include "narrground/kg_store.hpp"
#include "narrground/matcher.hpp"
#include "narrground/pipeline.hpp"
#include "narrground/retriever.hpp"
#include "narrground/rgcn.hpp"
#include "narrground/serializer.hpp"

namespace py = pybind11;
namespace eg = narrground;
namespace pl = narrground::pipeline;
using json = nlohmann::ordered_json;

namespace {

std::vector<eg::SrlFrame> frames_from(const std::string& text) {
  std::vector<eg::SrlFrame> frames;
  for (const auto& j : json::parse(text)) frames.push_back(eg::frame_from_json(j));
  return frames;
}

std::string dump(const std::vector<json>& records) { return json(records).dump(); }

eg::EmbeddingMatrix matrix_from(const std::vector<std::vector<float>>& rows) {
  eg::EmbeddingMatrix m;
  if (rows.empty()) throw eg::ConfigError("embedding matrix has no rows");
  m.dim = static_cast<std::uint32_t>(rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.dim) throw eg::ConfigError("ragged embedding rows");
    m.ids.push_back(i);
    m.values.insert(m.values.end(), rows[i].begin(), rows[i].end());
  }
  return m;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Event grounding engine (C++ core)";

  auto base = py::register_exception<eg::Error>(m, "NarrgroundError", PyExc_ValueError);
  py::register_exception<eg::FormatError>(m, "FormatError", base.ptr());
  py::register_exception<eg::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<eg::InvariantError>(m, "InvariantError", base.ptr());

  m.attr("DEFAULT_THRESHOLD") = eg::kDefaultThreshold;
  m.attr("DEFAULT_HOPS") = eg::kDefaultHopLimit;

  py::class_<eg::KgStore>(m, "KgStore")
      .def_static("load", &eg::KgStore::load, py::arg("nodes_path"), py::arg("edges_path"))
      .def_static("restore", [](py::bytes blob) {
        return eg::KgStore::restore(std::string(blob));
      })
      .def("snapshot", [](const eg::KgStore& s) { return py::bytes(s.snapshot()); })
      .def_property_readonly("node_count", &eg::KgStore::node_count)
      .def_property_readonly("edge_count", &eg::KgStore::edge_count)
      .def_property_readonly("relations",
                             [](const eg::KgStore& s) { return s.relations().names(); })
      .def("text", [](const eg::KgStore& s, eg::NodeId id) { return s.node(id).text; })
      .def("freq", [](const eg::KgStore& s, eg::NodeId id) { return s.node(id).freq; })
      .def(
          "neighbors",
          [](const eg::KgStore& s, eg::NodeId id, const std::string& direction) {
            if (direction != "out" && direction != "in") {
              throw eg::ConfigError("direction must be 'out' or 'in'");
            }
            auto dir = direction == "out" ? eg::Direction::kOut : eg::Direction::kIn;
            std::vector<std::tuple<std::string, eg::NodeId, double>> out;
            for (auto nb : s.neighbors(id, dir)) {
              out.emplace_back(s.relations().name(nb.edge->rel), nb.node, nb.edge->weight);
            }
            return out;
          },
          py::arg("node"), py::arg("direction") = "out")
      .def("shortest_path",
           [](const eg::KgStore& s, eg::NodeId a, eg::NodeId b, int hops)
               -> std::optional<std::vector<eg::NodeId>> {
             auto p = eg::shortest_path(s, a, b, hops);
             if (!p) return std::nullopt;
             return p->nodes;
           },
           py::arg("src"), py::arg("dst"), py::arg("hops") = eg::kDefaultHopLimit);

  m.def(
      "_normalize",
      [](const std::string& frames, bool skip) {
        auto f = frames_from(frames);
        return dump(pl::normalized_records(pl::normalize_frames(f, skip)));
      },
      py::arg("frames_json"), py::arg("skip_person_tokens") = false);

  m.def(
      "_partial_events",
      [](const std::string& normalized, const std::string& cap) {
        std::vector<eg::NormalizedEvent> events;
        for (const auto& j : json::parse(normalized)) events.push_back(eg::event_from_json(j));
        return dump(pl::partial_records(pl::extract_partials(events, eg::parse_cap(cap))));
      },
      py::arg("normalized_json"), py::arg("cap") = "ARG1");

  py::class_<eg::HashingEmbedder>(m, "HashingEmbedder")
      .def(py::init<std::uint32_t>(), py::arg("dim") = 64)
      .def_property_readonly("dim", &eg::HashingEmbedder::dim)
      .def("embed", &eg::HashingEmbedder::embed, py::arg("text"));

  py::class_<eg::EventIndex>(m, "EventIndex")
      .def(py::init([](const std::vector<std::vector<float>>& rows, const std::string& backend,
                       std::uint64_t seed) {
             eg::SearchBackend b;
             if (backend == "exact") b = eg::SearchBackend::kExact;
             else if (backend == "approximate") b = eg::SearchBackend::kApproximate;
             else throw eg::ConfigError("unknown backend '" + backend + "'");
             eg::IndexParams params;
             params.seed = seed;
             return eg::EventIndex::build(matrix_from(rows), b, params);
           }),
           py::arg("vectors"), py::arg("backend") = "exact", py::arg("seed") = 0)
      .def_property_readonly("dim", &eg::EventIndex::dim)
      .def("__len__", &eg::EventIndex::size)
      .def("nearest",
           [](const eg::EventIndex& idx, const std::vector<float>& q)
               -> std::optional<std::pair<eg::NodeId, double>> {
             auto r = idx.nearest(q);
             if (!r) return std::nullopt;
             return std::make_pair(r->node, r->distance);
           })
      .def(
          "match",
          [](const eg::EventIndex& idx, const std::vector<float>& q, double threshold)
              -> std::optional<std::pair<eg::NodeId, double>> {
            auto r = eg::match_event(idx, q, threshold);
            if (!r) return std::nullopt;
            return std::make_pair(r->node, r->distance);
          },
          py::arg("query"), py::arg("threshold") = eg::kDefaultThreshold);

  m.def(
      "_serialize",
      [](const std::string& joint, const std::string& variant, bool labels) {
        auto g = eg::joint_from_json(json::parse(joint));
        return eg::serialize(g, {eg::parse_variant(variant), labels});
      },
      py::arg("joint_json"), py::arg("variant") = "node_edge",
      py::arg("relation_labels") = false);

  m.def(
      "build_prompt",
      [](const std::string& question, const std::vector<std::string>& blocks) {
        return eg::build_prompt({question, blocks});
      },
      py::arg("question"), py::arg("choice_blocks"));

  m.def(
      "softmax",
      [](const std::vector<double>& logits) { return eg::rgcn::softmax(logits); },
      py::arg("logits"));

  m.def(
      "_run_pipeline",
      [](const std::map<std::string, std::string>& opts) {
        pl::Config c;
        for (const auto& [key, value] : opts) {
          if (key == "kg_nodes") c.kg_nodes = value;
          else if (key == "kg_edges") c.kg_edges = value;
          else if (key == "kg_snapshot") c.kg_snapshot = value;
          else if (key == "embeddings") c.embeddings = value;
          else if (key == "query_embeddings") c.query_embeddings = value;
          else if (key == "events") c.events = value;
          else if (key == "sentences") c.sentences = value;
          else if (key == "tasks") c.tasks = value;
          else if (key == "params") c.params = value;
          else if (key == "out_dir") c.out_dir = value;
          else if (key == "threshold") c.threshold = std::stod(value);
          else if (key == "hops") c.hops = std::stoi(value);
          else if (key == "cap") c.cap = eg::parse_cap(value);
          else if (key == "no_extract") c.no_extract = value == "1";
          else if (key == "no_norm") c.no_norm = value == "1";
          else if (key == "no_pie") c.no_pie = value == "1";
          else if (key == "variant") c.variant = eg::parse_variant(value);
          else if (key == "relation_labels") c.relation_labels = value == "1";
          else if (key == "embed_dim") c.embed_dim = static_cast<std::uint32_t>(std::stoul(value));
          else if (key == "seed") c.seed = std::stoull(value);
          else if (key == "threads") c.threads = static_cast<unsigned>(std::stoul(value));
          else if (key == "top_k") c.top_k = std::stoi(value);
          else if (key == "backend") {
            if (value == "approximate") c.backend = eg::SearchBackend::kApproximate;
            else if (value != "exact") throw eg::ConfigError("unknown backend '" + value + "'");
          } else {
            throw eg::ConfigError("unknown pipeline option '" + key + "'");
          }
        }
        c.finalize();
        py::gil_scoped_release release;
        return pl::run_pipeline(c);
      },
      py::arg("options"));
}
