#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <span>

#include "bitgear/binarize.hpp"
#include "bitgear/config.hpp"
#include "bitgear/evaluation.hpp"
#include "bitgear/graph.hpp"
#include "bitgear/model_io.hpp"
#include "bitgear/propagation.hpp"
#include "bitgear/scoring.hpp"
#include "bitgear/training.hpp"

namespace py = pybind11;
using namespace bitgear;

namespace {

std::vector<double> table_row(const DenseEmbeddingTable& t, std::size_t r) {
  const auto row = t.row(r);
  return {row.begin(), row.end()};
}

std::vector<double> scorer_all_items(const BinaryScorer& scorer,
                                     std::uint32_t u,
                                     const std::string& path) {
  std::vector<double> out(scorer.num_items());
  scorer.all_items(u, path == "float" ? ScorePath::BinaryFloat
                                      : ScorePath::Bitwise,
                   out);
  return out;
}

}  // namespace

PYBIND11_MODULE(_bitgear, m) {
  m.doc() = "binarized graph embeddings for top-K recommendation";

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

  py::class_<InteractionGraph>(m, "InteractionGraph")
      .def_static(
          "from_edges",
          [](std::uint32_t users, std::uint32_t items,
             std::vector<std::pair<std::uint32_t, std::uint32_t>> edges) {
            return InteractionGraph::from_edges(users, items,
                                                std::move(edges));
          },
          py::arg("num_users"), py::arg("num_items"), py::arg("edges"))
      .def_property_readonly("num_users", &InteractionGraph::num_users)
      .def_property_readonly("num_items", &InteractionGraph::num_items)
      .def_property_readonly("num_edges", &InteractionGraph::num_edges)
      .def("items_of",
           [](const InteractionGraph& g, std::uint32_t u) {
             const auto s = g.items_of(u);
             return std::vector<std::uint32_t>(s.begin(), s.end());
           })
      .def("user_degree", &InteractionGraph::user_degree)
      .def("item_degree", &InteractionGraph::item_degree)
      .def("user_has_item", &InteractionGraph::user_has_item);

  py::class_<DatasetSplit>(m, "DatasetSplit")
      .def_readonly("test_items", &DatasetSplit::test_items)
      .def_readonly("orphan_users", &DatasetSplit::orphan_users)
      .def_readonly("orphan_items", &DatasetSplit::orphan_items)
      .def_readonly("test_edge_count", &DatasetSplit::test_edge_count);

  py::class_<LoadReport>(m, "LoadReport")
      .def_readonly("users", &LoadReport::users)
      .def_readonly("items", &LoadReport::items)
      .def_readonly("train_edges", &LoadReport::train_edges)
      .def_readonly("test_edges", &LoadReport::test_edges)
      .def_readonly("orphan_test_nodes", &LoadReport::orphan_test_nodes)
      .def("to_key_values", &LoadReport::to_key_values);

  py::class_<LoadResult>(m, "LoadResult")
      .def_readonly("graph", &LoadResult::graph)
      .def_readonly("split", &LoadResult::split)
      .def_readonly("report", &LoadResult::report);

  m.def(
      "load_edge_list",
      [](const std::string& train, std::optional<std::string> test,
         const std::string& format) {
        LoadOptions opt;
        if (format == "pairs") opt.format = EdgeFormat::Pairs;
        else if (format == "multi") opt.format = EdgeFormat::Multi;
        return load_edge_list(train, test, opt);
      },
      py::arg("train"), py::arg("test") = std::nullopt,
      py::arg("format") = "auto");
  m.def(
      "load_edge_list_text",
      [](const std::string& train, std::optional<std::string> test,
         const std::string& format) {
        LoadOptions opt;
        if (format == "pairs") opt.format = EdgeFormat::Pairs;
        else if (format == "multi") opt.format = EdgeFormat::Multi;
        return load_edge_list_text(
            train,
            test ? std::optional<std::string_view>(*test) : std::nullopt,
            opt);
      },
      py::arg("train"), py::arg("test") = std::nullopt,
      py::arg("format") = "auto");

  py::class_<DenseEmbeddingTable>(m, "DenseEmbeddingTable")
      .def_readonly("rows", &DenseEmbeddingTable::rows)
      .def_readonly("dim", &DenseEmbeddingTable::dim)
      .def("row", &table_row);

  py::class_<LayerOutputs>(m, "LayerOutputs")
      .def_property_readonly("num_layers", &LayerOutputs::num_layers)
      .def(
          "layer",
          [](const LayerOutputs& lo, std::size_t l)
              -> const DenseEmbeddingTable& { return lo.layers.at(l); },
          py::return_value_policy::reference_internal);

  m.def(
      "propagate",
      [](const InteractionGraph& g, const DenseEmbeddingTable& base,
         std::size_t depth, const std::string& mode, std::size_t threads) {
        return propagate(g, base, depth, norm_mode_from_string(mode),
                         threads);
      },
      py::arg("graph"), py::arg("base"), py::arg("depth"),
      py::arg("mode") = "symmetric", py::arg("threads") = 1);

  py::class_<LayerWeights>(m, "LayerWeights")
      .def_static(
          "for_scheme",
          [](const std::string& scheme, std::size_t depth) {
            return LayerWeights::for_scheme(wl_scheme_from_string(scheme),
                                            depth);
          },
          py::arg("scheme"), py::arg("depth"))
      .def_readonly("w", &LayerWeights::w);

  py::class_<BinarizedTable>(m, "BinarizedTable")
      .def_readonly("num_users", &BinarizedTable::num_users)
      .def_readonly("num_items", &BinarizedTable::num_items)
      .def_readonly("dim", &BinarizedTable::dim)
      .def_readonly("num_layers", &BinarizedTable::num_layers)
      .def_readonly("layer_weights", &BinarizedTable::layer_weights)
      .def("scaler", &BinarizedTable::scaler);

  m.def("build_tables", &build_tables, py::arg("layers"),
        py::arg("num_users"), py::arg("weights"), py::arg("threads") = 1);

  m.def("score_full", &score_full);
  m.def("score_binary_float", &score_binary_float);
  m.def("score_binary_bitwise", &score_binary_bitwise);

  py::class_<BinaryScorer>(m, "BinaryScorer")
      .def(py::init<const BinarizedTable&, LayerWeights, std::size_t>(),
           py::arg("table"), py::arg("weights"), py::arg("threads") = 1,
           py::keep_alive<1, 2>())
      .def("all_items", &scorer_all_items, py::arg("user"),
           py::arg("path") = "bitwise");

  m.def(
      "top_k",
      [](const std::vector<double>& scores, std::size_t k,
         std::vector<std::uint32_t> exclude) {
        std::sort(exclude.begin(), exclude.end());
        return top_k(scores, k, exclude);
      },
      py::arg("scores"), py::arg("k"),
      py::arg("exclude") = std::vector<std::uint32_t>{});

  m.def(
      "recall_at_k",
      [](std::vector<std::uint32_t> ranked, std::vector<std::uint32_t> rel,
         std::size_t k) {
        std::sort(rel.begin(), rel.end());
        return recall_at_k(ranked, rel, k);
      },
      py::arg("ranked"), py::arg("relevant"), py::arg("k"));
  m.def(
      "ndcg_at_k",
      [](std::vector<std::uint32_t> ranked, std::vector<std::uint32_t> rel,
         std::size_t k) {
        std::sort(rel.begin(), rel.end());
        return ndcg_at_k(ranked, rel, k);
      },
      py::arg("ranked"), py::arg("relevant"), py::arg("k"));

  py::class_<TrainingConfig>(m, "TrainingConfig")
      .def(py::init<>())
      .def_readwrite("d", &TrainingConfig::d)
      .def_readwrite("layers", &TrainingConfig::layers)
      .def_readwrite("batch_size", &TrainingConfig::batch_size)
      .def_readwrite("eta", &TrainingConfig::eta)
      .def_readwrite("lambda_", &TrainingConfig::lambda)
      .def_readwrite("lambda1", &TrainingConfig::lambda1)
      .def_readwrite("lambda2", &TrainingConfig::lambda2)
      .def_readwrite("gamma", &TrainingConfig::gamma)
      .def_readwrite("top_r", &TrainingConfig::top_r)
      .def_readwrite("epochs_teacher", &TrainingConfig::epochs_teacher)
      .def_readwrite("epochs_student", &TrainingConfig::epochs_student)
      .def_readwrite("seed", &TrainingConfig::seed)
      .def_property(
          "estimator",
          [](const TrainingConfig& c) { return to_string(c.estimator); },
          [](TrainingConfig& c, const std::string& s) {
            c.estimator = estimator_from_string(s);
          })
      .def_property(
          "wl_scheme",
          [](const TrainingConfig& c) { return to_string(c.wl_scheme); },
          [](TrainingConfig& c, const std::string& s) {
            c.wl_scheme = wl_scheme_from_string(s);
          })
      .def_property(
          "wk_scheme",
          [](const TrainingConfig& c) { return to_string(c.wk_scheme); },
          [](TrainingConfig& c, const std::string& s) {
            c.wk_scheme = wk_scheme_from_string(s);
          })
      .def_property(
          "norm_mode",
          [](const TrainingConfig& c) { return to_string(c.norm_mode); },
          [](TrainingConfig& c, const std::string& s) {
            c.norm_mode = norm_mode_from_string(s);
          });

  m.def("parse_config_text", [](const std::string& text) {
    return parse_config_text(text);
  });

  py::class_<TeacherCache>(m, "TeacherCache")
      .def_readonly("num_users", &TeacherCache::num_users)
      .def_readonly("num_layers", &TeacherCache::num_layers)
      .def_readonly("top_r", &TeacherCache::top_r)
      .def("items_for", [](const TeacherCache& c, std::uint32_t u,
                           std::size_t layer) {
        const auto s = c.items_for(u, layer);
        return std::vector<std::uint32_t>(s.begin(), s.end());
      });

  py::class_<TeacherResult>(m, "TeacherResult")
      .def_readonly("base", &TeacherResult::base)
      .def_readonly("layers", &TeacherResult::layers);
  py::class_<StudentResult>(m, "StudentResult")
      .def_readonly("table", &StudentResult::table)
      .def_readonly("base", &StudentResult::base);

  m.def(
      "pretrain_teacher",
      [](const InteractionGraph& g, const TrainingConfig& cfg,
         std::size_t threads, const std::optional<py::function>& on_epoch) {
        TrainOptions opt;
        opt.threads = threads;
        if (on_epoch)
          opt.on_epoch = [fn = *on_epoch](const EpochLog& log) {
            fn(log.epoch, log.loss_bpr, log.loss_id, log.loss_l2);
          };
        return pretrain_teacher(g, cfg, opt);
      },
      py::arg("graph"), py::arg("config"), py::arg("threads") = 1,
      py::arg("on_epoch") = std::nullopt);

  m.def(
      "build_teacher_cache",
      [](const LayerOutputs& layers, std::uint32_t num_users,
         const LayerWeights& w, std::uint32_t top_r, std::size_t threads) {
        return build_teacher_cache(layers, num_users, w, top_r, threads);
      },
      py::arg("layers"), py::arg("num_users"), py::arg("weights"),
      py::arg("top_r"), py::arg("threads") = 1);

  m.def(
      "train_student",
      [](const InteractionGraph& g, const DenseEmbeddingTable& teacher_base,
         const TeacherCache& cache, const TrainingConfig& cfg,
         std::size_t threads) {
        TrainOptions opt;
        opt.threads = threads;
        return train_student(g, teacher_base, cache, cfg, opt);
      },
      py::arg("graph"), py::arg("teacher_base"), py::arg("cache"),
      py::arg("config"), py::arg("threads") = 1);

  py::class_<MetricReport>(m, "MetricReport")
      .def_readonly("ks", &MetricReport::ks)
      .def_readonly("recall", &MetricReport::recall)
      .def_readonly("ndcg", &MetricReport::ndcg)
      .def_readonly("users_evaluated", &MetricReport::users_evaluated)
      .def("to_tsv", &MetricReport::to_tsv)
      .def("to_json", &MetricReport::to_json);

  m.def(
      "evaluate_binary",
      [](const BinarizedTable& table, const InteractionGraph& g,
         const DatasetSplit& split, const std::vector<std::size_t>& ks,
         const std::string& path, std::size_t threads) {
        LayerWeights w;
        w.w = table.layer_weights;
        const BinaryScorer scorer(table, w, threads);
        const ScorePath p =
            path == "float" ? ScorePath::BinaryFloat : ScorePath::Bitwise;
        return evaluate(
            [&](std::uint32_t u, std::span<double> out) {
              scorer.all_items(u, p, out);
            },
            g, split, ks, threads);
      },
      py::arg("table"), py::arg("graph"), py::arg("split"), py::arg("ks"),
      py::arg("path") = "bitwise", py::arg("threads") = 1);

  m.def("save_binarized_table", &save_binarized_table);
  m.def("load_binarized_table", &load_binarized_table);
  m.def("save_teacher_checkpoint", &save_teacher_checkpoint);
  m.def("load_teacher_checkpoint", &load_teacher_checkpoint);
  m.def("save_teacher_cache", &save_teacher_cache);
  m.def("load_teacher_cache", &load_teacher_cache);
}
