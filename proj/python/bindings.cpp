#include "drag/error.hpp"
#include "drag/graph.hpp"
#include "drag/metrics.hpp"
#include "drag/model.hpp"
#include "drag/train.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <optional>

namespace py = pybind11;
using namespace drag;
using diff::Index;
using diff::Matrix;

namespace {

graph::Format format_for(const std::string& name, const std::string& path) {
  if (name != "auto") return graph::parse_format(name);
  return std::filesystem::path(path).extension() == ".json" ? graph::Format::ContainerJson : graph::Format::TriplesCsv;
}

std::vector<Index> mask_or_all(const std::optional<std::vector<Index>>& mask, std::size_t n) {
  return mask ? *mask : metrics::all_indices(n);
}

model::HyperParams make_hp(Index layers, Index hidden, Index heads, bool literal_blocks) {
  model::HyperParams hp;
  hp.layers = layers;
  hp.hidden = hidden;
  hp.heads_alpha = hp.heads_beta = hp.heads_gamma = heads;
  hp.literal_blocks = literal_blocks;
  hp.validate();
  return hp;
}

struct Params {
  model::DragParams p;
};

}  // namespace

PYBIND11_MODULE(_drag, m) {
  m.doc() = "C++ core of the DRAG fraud-detection GNN";

  // Later registrations are tried first, so the base class goes first.
  py::register_exception<Error>(m, "DragError", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

  py::class_<graph::MultiRelationGraph>(m, "Graph")
      .def(py::init([](const Matrix& features, const std::vector<int>& labels, const std::vector<std::string>& names,
                       const std::vector<std::vector<graph::Edge>>& edges) {
             return graph::MultiRelationGraph(features, labels, names, edges);
           }),
           py::arg("features"), py::arg("labels"), py::arg("relation_names"), py::arg("edges"))
      .def_property_readonly("num_nodes", &graph::MultiRelationGraph::num_nodes)
      .def_property_readonly("num_relations", &graph::MultiRelationGraph::num_relations)
      .def_property_readonly("feature_dim", &graph::MultiRelationGraph::feature_dim)
      .def_property_readonly("features", &graph::MultiRelationGraph::features)
      .def_property_readonly("labels", &graph::MultiRelationGraph::labels)
      .def_property_readonly("relation_names", &graph::MultiRelationGraph::relation_names)
      .def_property_readonly("fraud_count", &graph::MultiRelationGraph::fraud_count)
      .def("edges", &graph::MultiRelationGraph::edge_list, py::arg("relation"))
      .def("neighbors", [](const graph::MultiRelationGraph& g, Index relation, Index node) {
        auto span = g.relation(relation).neighbors_of(node);
        return std::vector<Index>(span.begin(), span.end());
      })
      .def("has_self_loops", &graph::MultiRelationGraph::has_self_loops)
      .def("__repr__", [](const graph::MultiRelationGraph& g) {
        return "<Graph n=" + std::to_string(g.num_nodes()) + " m=" + std::to_string(g.num_relations()) +
               " d=" + std::to_string(g.feature_dim()) + ">";
      });

  m.def("load_graph", [](const std::string& path, const std::string& format) {
    return graph::load_graph(path, format_for(format, path));
  }, py::arg("path"), py::arg("format") = "auto");
  m.def("save_graph", [](const graph::MultiRelationGraph& g, const std::string& path, const std::string& format) {
    graph::save_graph(g, path, format_for(format, path));
  }, py::arg("graph"), py::arg("path"), py::arg("format") = "auto");
  m.def("add_self_loops", &graph::add_self_loops);
  m.def("deduplicate_nodes", [](const graph::MultiRelationGraph& g) {
    auto r = graph::deduplicate_nodes(g);
    return py::make_tuple(std::move(r.graph), r.removed);
  });
  m.def("split_labels", [](const graph::MultiRelationGraph& g, double p, std::uint64_t seed) {
    auto s = graph::split_labels(g, p, seed);
    py::dict d;
    d["train"] = s.train;
    d["val"] = s.val;
    d["test"] = s.test;
    return d;
  }, py::arg("graph"), py::arg("p"), py::arg("seed"));
  m.def("gen_synthetic",
        [](Index n, Index m_rel, Index d, double fraud_ratio, Index informative, std::vector<double> homophily,
           std::uint64_t seed, double avg_degree, double signal) {
          graph::SyntheticSpec spec;
          spec.n = n;
          spec.m = m_rel;
          spec.d = d;
          spec.fraud_ratio = fraud_ratio;
          spec.informative_relation = informative;
          spec.homophily_per_relation = std::move(homophily);
          spec.seed = seed;
          spec.avg_degree = avg_degree;
          spec.feature_signal = signal;
          return graph::gen_synthetic(spec);
        },
        py::arg("n") = 1000, py::arg("m") = 3, py::arg("d") = 16, py::arg("fraud_ratio") = 0.15,
        py::arg("informative_relation") = 0, py::arg("homophily") = std::vector<double>{}, py::arg("seed") = 0,
        py::arg("avg_degree") = 8.0, py::arg("feature_signal") = 1.0);

  m.def("auc", [](const std::vector<double>& s, const std::vector<int>& y, std::optional<std::vector<Index>> mask) {
    return metrics::auc(s, y, mask_or_all(mask, y.size()));
  }, py::arg("scores"), py::arg("labels"), py::arg("mask") = py::none());
  m.def("f1_macro",
        [](const std::vector<double>& s, const std::vector<int>& y, std::optional<std::vector<Index>> mask, double t) {
          return metrics::f1_macro(s, y, mask_or_all(mask, y.size()), t);
        },
        py::arg("scores"), py::arg("labels"), py::arg("mask") = py::none(), py::arg("threshold") = 0.5);

  py::class_<Params>(m, "Params")
      .def_property_readonly("num_relations", [](const Params& p) { return p.p.num_relations; })
      .def_property_readonly("feature_dim", [](const Params& p) { return p.p.feature_dim; })
      .def_property_readonly("layers", [](const Params& p) { return p.p.hp.layers; })
      .def_property_readonly("hidden", [](const Params& p) { return p.p.hp.hidden; })
      .def("tensors", [](Params& p) {
        py::dict d;
        for (auto& ref : p.p.tensors()) d[py::str(ref.name)] = ref.tensor->value;
        return d;
      })
      .def("set_tensor", [](Params& p, const std::string& name, const Matrix& value) {
        for (auto& ref : p.p.tensors()) {
          if (ref.name != name) continue;
          if (value.rows() != ref.tensor->value.rows() || value.cols() != ref.tensor->value.cols()) {
            throw ShapeError("set_tensor: shape mismatch for " + name);
          }
          ref.tensor->value = value;
          return;
        }
        throw ValidationError("unknown tensor " + name);
      })
      .def("save", [](Params& p, const std::string& path, const std::string& meta) {
        model::save_checkpoint(path, p.p, meta);
      }, py::arg("path"), py::arg("metadata_json") = "{}");

  m.def("init_params",
        [](Index num_relations, Index feature_dim, Index layers, Index hidden, Index heads, std::uint64_t seed,
           bool literal_blocks) {
          return Params{model::init_params(make_hp(layers, hidden, heads, literal_blocks), num_relations, feature_dim, seed)};
        },
        py::arg("num_relations"), py::arg("feature_dim"), py::arg("layers") = 2, py::arg("hidden") = 64,
        py::arg("heads") = 2, py::arg("seed") = 0, py::arg("literal_blocks") = false);
  m.def("load_checkpoint", [](const std::string& path) {
    auto ck = model::load_checkpoint(path);
    return py::make_tuple(Params{std::move(ck.params)}, ck.metadata_json);
  });

  m.def("forward", [](const graph::MultiRelationGraph& g, Params& p, const std::string& mode) {
    auto state = model::forward(model::PreparedGraph(g, model::parse_mode(mode)), p.p, true);
    py::dict d;
    d["yhat"] = state.yhat;
    d["normalization_error"] = model::normalization_error(state);
    d["alpha"] = model::export_attention(state, model::AttentionKind::Alpha);
    d["beta"] = model::export_attention(state, model::AttentionKind::Beta);
    d["gamma"] = state.gamma.empty() ? std::string() : model::export_attention(state, model::AttentionKind::Gamma);
    return d;
  }, py::arg("graph"), py::arg("params"), py::arg("mode") = "full");

  m.def("grad_check", [](const graph::MultiRelationGraph& g, Params& p, const std::string& mode, double h, double tol) {
    model::PreparedGraph pg(g, model::parse_mode(mode));
    const auto batch = metrics::all_indices(static_cast<std::size_t>(g.num_nodes()));
    auto f = [&](diff::Tape& tape) {
      return model::bce_loss(model::forward_on_tape(tape, pg, p.p, model::ForwardOptions{false, true}), g.labels(), batch);
    };
    auto named = p.p.named_tensors();
    auto r = diff::grad_check(f, named, h, tol);
    py::dict d;
    d["max_rel_error"] = r.max_rel_error;
    d["passed"] = r.passed;
    d["tolerance"] = r.tolerance;
    py::dict per;
    for (const auto& e : r.tensors) per[py::str(e.name)] = e.max_rel_error;
    d["tensors"] = per;
    return d;
  }, py::arg("graph"), py::arg("params"), py::arg("mode") = "full", py::arg("h") = 1e-5, py::arg("tol") = 1e-4);

  // Training entry points take and return JSON text; the Python wrapper
  // converts to and from dicts.
  m.def("train_model", [](const graph::MultiRelationGraph& g, const std::vector<Index>& train,
                          const std::vector<Index>& val, const std::vector<Index>& test, const std::string& config) {
    graph::SplitMasks masks{train, val, test, 0.0};
    const auto cfg = train::config_from_json(nlohmann::json::parse(config));
    train::TrainOutput out;
    {
      py::gil_scoped_release release;
      out = train::train_model(g, masks, cfg);
    }
    return py::make_tuple(train::to_json(out.result).dump(), Params{std::move(out.params)});
  });
  m.def("run_protocol", [](const graph::MultiRelationGraph& g, double p, const std::string& config,
                           const std::string& grid_json, int jobs) {
    const auto cfg = train::config_from_json(nlohmann::json::parse(config));
    const auto gj = nlohmann::json::parse(grid_json);
    train::Grid grid;
    grid.learning_rates = gj.value("learning_rates", grid.learning_rates);
    grid.weight_decays = gj.value("weight_decays", grid.weight_decays);
    grid.layers = gj.value("layers", grid.layers);
    grid.heads = gj.value("heads", grid.heads);
    train::ProtocolRow row;
    {
      py::gil_scoped_release release;
      row = train::run_protocol(g, p, grid, cfg, jobs);
    }
    return train::to_json(row).dump();
  });
  m.def("default_config", [] { return train::to_json(train::TrainConfig{}).dump(); });
}
