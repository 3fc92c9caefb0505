#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bitgear/config.hpp"
#include "bitgear/evaluation.hpp"
#include "bitgear/model_io.hpp"
#include "bitgear/parallel.hpp"
#include "bitgear/propagation.hpp"
#include "bitgear/scoring.hpp"
#include "bitgear/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// exit code 2: usage / input problems; 1: runtime failure
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonOpts {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::size_t threads = bitgear::default_threads();
  bool deterministic = false;
  std::string format = "auto";
};

void add_config_flags(CLI::App* cmd, CommonOpts& common) {
  cmd->add_option("--config", common.config_path,
                  "key = value config file (flags override it)");
  static const std::vector<std::string> keys = {
      "d", "L", "B", "eta", "lambda", "lambda1", "lambda2", "gamma",
      "R", "epochs_teacher", "epochs_student", "estimator", "wl_scheme",
      "wk_scheme", "seed", "norm_mode"};
  for (const auto& key : keys) {
    cmd->add_option_function<std::string>(
        "--" + key,
        [&common, key](const std::string& value) {
          common.overrides.emplace_back(key, value);
        },
        "override config key " + key);
  }
  cmd->add_option("--threads", common.threads,
                  "worker threads (default: BITGEAR_THREADS or hardware)");
  cmd->add_flag("--deterministic", common.deterministic,
                "thread-count-independent gradient reduction");
  cmd->add_option("--format", common.format,
                  "edge list format: auto|pairs|multi");
}

bitgear::TrainingConfig resolve_config(const CommonOpts& common) {
  bitgear::TrainingConfig cfg;
  if (!common.config_path.empty()) {
    if (!fs::exists(common.config_path))
      throw UsageError("config file not found: " + common.config_path);
    cfg = bitgear::parse_config_file(common.config_path, cfg);
  }
  for (const auto& [key, value] : common.overrides)
    bitgear::apply_config_key(cfg, key, value);
  cfg.validate();
  return cfg;
}

bitgear::LoadOptions load_options(const CommonOpts& common) {
  bitgear::LoadOptions opt;
  if (common.format == "auto") opt.format = bitgear::EdgeFormat::Auto;
  else if (common.format == "pairs") opt.format = bitgear::EdgeFormat::Pairs;
  else if (common.format == "multi") opt.format = bitgear::EdgeFormat::Multi;
  else throw UsageError("unknown --format: " + common.format);
  return opt;
}

bitgear::LoadResult load_dataset(const std::string& train,
                                 const std::optional<std::string>& test,
                                 const CommonOpts& common) {
  if (!fs::exists(train)) throw UsageError("train file not found: " + train);
  if (test && !fs::exists(*test))
    throw UsageError("test file not found: " + *test);
  auto res = bitgear::load_edge_list(train, test, load_options(common));
  std::cerr << res.report.to_key_values();
  return res;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

json config_json(const bitgear::TrainingConfig& cfg) {
  return json{{"d", cfg.d},
              {"L", cfg.layers},
              {"B", cfg.batch_size},
              {"eta", cfg.eta},
              {"lambda", cfg.lambda},
              {"lambda1", cfg.lambda1},
              {"lambda2", cfg.lambda2},
              {"gamma", cfg.gamma},
              {"R", cfg.top_r},
              {"epochs_teacher", cfg.epochs_teacher},
              {"epochs_student", cfg.epochs_student},
              {"estimator", bitgear::to_string(cfg.estimator)},
              {"wl_scheme", bitgear::to_string(cfg.wl_scheme)},
              {"wk_scheme", bitgear::to_string(cfg.wk_scheme)},
              {"seed", cfg.seed},
              {"norm_mode", bitgear::to_string(cfg.norm_mode)}};
}

void write_manifest(const std::string& path, const std::string& command,
                    const bitgear::TrainingConfig& cfg,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& artifacts,
                    const CommonOpts& common, double seconds) {
  json m;
  m["command"] = command;
  m["config"] = config_json(cfg);
  m["seed"] = cfg.seed;
  m["threads"] = common.threads;
  m["deterministic"] = common.deterministic;
  m["inputs"] = json::object();
  for (const auto& in : inputs)
    m["inputs"][in] = hex64(bitgear::file_digest(in));
  m["artifacts"] = artifacts;
  m["seconds"] = seconds;
  bitgear::write_file_atomic(path, m.dump(2) + "\n");
}

bitgear::EpochCallback stdout_epoch_log() {
  return [](const bitgear::EpochLog& log) {
    std::cout << "epoch=" << log.epoch << " loss_bpr=" << log.loss_bpr
              << " loss_id=" << log.loss_id << " loss_l2=" << log.loss_l2
              << " lr=" << log.lr << " secs=" << log.seconds << "\n";
  };
}

bitgear::DenseEmbeddingTable load_checkpoint_checked(
    const std::string& path, const bitgear::InteractionGraph& graph,
    const bitgear::TrainingConfig& cfg) {
  if (!fs::exists(path)) throw UsageError("checkpoint not found: " + path);
  auto base = bitgear::load_teacher_checkpoint(path);
  if (base.rows != graph.num_nodes())
    throw UsageError("checkpoint rows do not match the graph");
  if (base.dim != cfg.d)
    throw UsageError("checkpoint dim does not match config d");
  return base;
}

int run_pretrain(const std::string& train, const std::string& test,
                 const std::string& out, const CommonOpts& common) {
  const auto cfg = resolve_config(common);
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = load_dataset(
      train, test.empty() ? std::nullopt : std::optional(test), common);

  bitgear::TrainOptions topt;
  topt.threads = common.threads;
  topt.deterministic = common.deterministic;
  topt.on_epoch = stdout_epoch_log();
  const auto teacher = bitgear::pretrain_teacher(data.graph, cfg, topt);

  const std::string ckpt = out + ".bgt";
  bitgear::save_teacher_checkpoint(ckpt, teacher.base);
  bitgear::save_id_index(out + ".idmap", data.user_ids, data.item_ids);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  std::vector<std::string> inputs = {train};
  if (!test.empty()) inputs.push_back(test);
  write_manifest(out + ".manifest.json", "pretrain", cfg, inputs,
                 {ckpt, out + ".idmap"}, common, secs);
  std::cout << "checkpoint=" << ckpt << "\n";
  return 0;
}

int run_cache(const std::string& train, const std::string& test,
              const std::string& teacher_path, const std::string& out,
              const CommonOpts& common) {
  const auto cfg = resolve_config(common);
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = load_dataset(
      train, test.empty() ? std::nullopt : std::optional(test), common);
  const auto base = load_checkpoint_checked(teacher_path, data.graph, cfg);
  const auto layers = bitgear::propagate(data.graph, base, cfg.layers,
                                         cfg.norm_mode, common.threads);
  const auto weights =
      bitgear::LayerWeights::for_scheme(cfg.wl_scheme, cfg.layers);
  const auto cache = bitgear::build_teacher_cache(
      layers, data.graph.num_users(), weights, cfg.top_r, common.threads);
  bitgear::save_teacher_cache(out, cache);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  std::vector<std::string> inputs = {train, teacher_path};
  if (!test.empty()) inputs.push_back(test);
  write_manifest(out + ".manifest.json", "cache", cfg, inputs, {out}, common,
                 secs);
  std::cout << "cache=" << out << " R=" << cache.top_r << "\n";
  return 0;
}

int run_train(const std::string& train, const std::string& test,
              const std::string& teacher_path, const std::string& cache_path,
              const std::string& out, const CommonOpts& common) {
  const auto cfg = resolve_config(common);
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = load_dataset(
      train, test.empty() ? std::nullopt : std::optional(test), common);
  const auto base = load_checkpoint_checked(teacher_path, data.graph, cfg);
  if (!fs::exists(cache_path))
    throw UsageError("cache not found: " + cache_path);
  const auto cache = bitgear::load_teacher_cache(cache_path);
  if (cache.num_layers != cfg.layers + 1)
    throw UsageError("cache layer count does not match config L");
  if (cache.num_users != data.graph.num_users())
    throw UsageError("cache user count does not match the graph");

  bitgear::TrainOptions topt;
  topt.threads = common.threads;
  topt.deterministic = common.deterministic;
  topt.on_epoch = stdout_epoch_log();
  const auto student =
      bitgear::train_student(data.graph, base, cache, cfg, topt);

  const std::string model = out + ".bgr";
  bitgear::save_binarized_table(model, student.table);
  bitgear::save_id_index(out + ".idmap", data.user_ids, data.item_ids);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  std::vector<std::string> inputs = {train, teacher_path, cache_path};
  if (!test.empty()) inputs.push_back(test);
  write_manifest(out + ".manifest.json", "train", cfg, inputs,
                 {model, out + ".idmap"}, common, secs);
  std::cout << "model=" << model << "\n";
  return 0;
}

int run_eval(const std::string& model_path, const std::string& train,
             const std::string& test, const std::string& ks_text,
             const std::string& path_name, bool as_json,
             const CommonOpts& common) {
  if (!fs::exists(model_path))
    throw UsageError("model not found: " + model_path);
  if (test.empty()) throw UsageError("eval needs --test");
  const auto data = load_dataset(train, std::optional(test), common);

  std::vector<std::size_t> ks;
  {
    std::istringstream is(ks_text);
    std::string tok;
    while (std::getline(is, tok, ','))
      if (!tok.empty()) ks.push_back(std::stoul(tok));
  }
  if (ks.empty()) throw UsageError("no K values given");

  // peek at the magic to decide which model kind this is
  std::ifstream probe(model_path, std::ios::binary);
  char magic[4] = {};
  probe.read(magic, 4);
  const std::string kind(magic, 4);

  bitgear::MetricReport report;
  if (kind == "BGT1") {
    if (path_name != "full")
      throw UsageError("teacher checkpoints evaluate with --path full");
    const auto cfg = resolve_config(common);
    const auto base = load_checkpoint_checked(model_path, data.graph, cfg);
    const auto layers = bitgear::propagate(data.graph, base, cfg.layers,
                                           cfg.norm_mode, common.threads);
    const auto weights =
        bitgear::LayerWeights::for_scheme(cfg.wl_scheme, cfg.layers);
    report = bitgear::evaluate(
        [&](std::uint32_t u, std::span<double> out) {
          bitgear::score_all_items_full(layers, data.graph.num_users(), u,
                                        weights, out);
        },
        data.graph, data.split, ks, common.threads);
  } else if (kind == "BGR1") {
    if (path_name != "float" && path_name != "bitwise")
      throw UsageError("binarized models evaluate with --path float|bitwise");
    const auto table = bitgear::load_binarized_table(model_path);
    if (table.num_users != data.graph.num_users() ||
        table.num_items != data.graph.num_items())
      throw UsageError("model shape does not match the graph");
    bitgear::LayerWeights weights;
    weights.w = table.layer_weights;
    const bitgear::BinaryScorer scorer(table, weights, common.threads);
    const auto path = path_name == "float" ? bitgear::ScorePath::BinaryFloat
                                           : bitgear::ScorePath::Bitwise;
    report = bitgear::evaluate(
        [&](std::uint32_t u, std::span<double> out) {
          scorer.all_items(u, path, out);
        },
        data.graph, data.split, ks, common.threads);
  } else {
    throw UsageError("unrecognized model file (magic '" + kind + "')");
  }

  std::cout << (as_json ? report.to_json() + "\n" : report.to_tsv());
  return 0;
}

int run_bench(const std::string& model_path, std::size_t queries,
              std::uint64_t seed, const CommonOpts& common) {
  if (!fs::exists(model_path))
    throw UsageError("model not found: " + model_path);
  std::cout << "queries=" << queries << "\n";
  if (queries == 0) return 0;

  const auto table = bitgear::load_binarized_table(model_path);
  bitgear::LayerWeights weights;
  weights.w = table.layer_weights;
  const bitgear::BinaryScorer scorer(table, weights, common.threads);

  bitgear::Rng rng(seed, bitgear::RngPurpose::BenchQueries);
  std::vector<std::uint32_t> users(queries);
  for (auto& u : users) u = rng.index(table.num_users);

  std::vector<double> out(table.num_items);
  double sink = 0.0;
  // warm-up
  scorer.all_items_float(users[0], out);
  scorer.all_items_bitwise(users[0], out);

  const auto tf0 = std::chrono::steady_clock::now();
  for (const auto u : users) {
    scorer.all_items_float(u, out);
    sink += out[0];
  }
  const double float_secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - tf0)
          .count();
  const auto tb0 = std::chrono::steady_clock::now();
  for (const auto u : users) {
    scorer.all_items_bitwise(u, out);
    sink += out[0];
  }
  const double bit_secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - tb0)
          .count();

  const double qd = static_cast<double>(queries);
  const auto model_bytes = fs::file_size(model_path);
  const double float_equiv_bytes = static_cast<double>(table.num_nodes()) *
                                   table.dim * 4.0;
  const double formula_ratio =
      static_cast<double>(table.num_layers) * (32.0 + table.dim) /
      (32.0 * table.dim);
  std::cout << "float_ms_per_query=" << 1000.0 * float_secs / qd << "\n"
            << "bitwise_ms_per_query=" << 1000.0 * bit_secs / qd << "\n"
            << "speedup=" << float_secs / bit_secs << "\n"
            << "model_bytes=" << model_bytes << "\n"
            << "float32_equiv_bytes=" << float_equiv_bytes << "\n"
            << "size_ratio=" << static_cast<double>(model_bytes) /
                                   float_equiv_bytes
            << "\n"
            << "size_ratio_formula=" << formula_ratio << "\n"
            << "compression=" << float_equiv_bytes /
                                     static_cast<double>(model_bytes)
            << "\n"
            << "checksum=" << sink << "\n";
  return 0;
}

int run_export_scores(const std::string& model_path, const std::string& train,
                      const std::string& test, const std::string& idmap_path,
                      const std::string& users_arg, std::size_t k,
                      const std::string& path_name, const std::string& out,
                      const CommonOpts& common) {
  if (!fs::exists(model_path))
    throw UsageError("model not found: " + model_path);
  const auto data = load_dataset(
      train, test.empty() ? std::nullopt : std::optional(test), common);
  const auto table = bitgear::load_binarized_table(model_path);
  if (table.num_users != data.graph.num_users() ||
      table.num_items != data.graph.num_items())
    throw UsageError("model shape does not match the graph");

  // original ids come from the persisted mapping when available
  bitgear::IdIndex user_ids = data.user_ids;
  bitgear::IdIndex item_ids = data.item_ids;
  std::string map_path = idmap_path;
  if (map_path.empty()) {
    const std::string guess =
        (fs::path(model_path).parent_path() /
         fs::path(model_path).stem())
            .string() +
        ".idmap";
    if (fs::exists(guess)) map_path = guess;
  }
  if (!map_path.empty()) {
    if (!fs::exists(map_path)) throw UsageError("idmap not found: " + map_path);
    auto loaded = bitgear::load_id_index(map_path);
    user_ids = std::move(loaded.first);
    item_ids = std::move(loaded.second);
  }

  std::vector<std::uint32_t> users;
  if (users_arg == "all") {
    for (std::uint32_t u = 0; u < table.num_users; ++u) users.push_back(u);
  } else {
    std::istringstream is(users_arg);
    std::string tok;
    while (std::getline(is, tok, ',')) {
      const auto found = user_ids.find(tok);
      if (!found) throw UsageError("unknown user id: " + tok);
      users.push_back(*found);
    }
  }

  bitgear::LayerWeights weights;
  weights.w = table.layer_weights;
  const bitgear::BinaryScorer scorer(table, weights, common.threads);
  const auto path = path_name == "float" ? bitgear::ScorePath::BinaryFloat
                                         : bitgear::ScorePath::Bitwise;
  if (path_name != "float" && path_name != "bitwise")
    throw UsageError("export-scores path must be float or bitwise");

  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!out.empty() && out != "-") {
    file.open(out);
    if (!file) throw std::runtime_error("cannot write " + out);
    os = &file;
  }
  std::vector<double> scores(table.num_items);
  for (const auto u : users) {
    scorer.all_items(u, path, scores);
    std::vector<std::uint32_t> exclude(data.graph.items_of(u).begin(),
                                       data.graph.items_of(u).end());
    const auto ranked = bitgear::top_k(scores, k, exclude);
    for (std::size_t r = 0; r < ranked.size(); ++r)
      (*os) << user_ids.token(u) << '\t' << (r + 1) << '\t'
            << item_ids.token(ranked[r]) << '\t' << scores[ranked[r]] << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"binarized graph embeddings for top-K recommendation"};
  app.require_subcommand(1);

  CommonOpts common;

  std::string train, test, out, teacher, cache_path, model;
  std::string ks_text = "20";
  std::string path_name = "bitwise";
  std::string users_arg = "all";
  std::string idmap;
  std::size_t queries = 1000;
  std::size_t k = 20;
  std::uint64_t bench_seed = 42;
  bool as_json = false;
  std::string epochs_override;

  auto* pretrain = app.add_subcommand("pretrain", "full-precision pre-training");
  pretrain->add_option("--train", train, "training edge list")->required();
  pretrain->add_option("--test", test, "held-out edge list");
  pretrain->add_option("--out", out, "output prefix")->required();
  pretrain->add_option("--epochs", epochs_override,
                       "shorthand for --epochs_teacher");
  add_config_flags(pretrain, common);

  auto* cache = app.add_subcommand("cache", "build the pseudo-positive cache");
  cache->add_option("--train", train, "training edge list")->required();
  cache->add_option("--test", test, "held-out edge list");
  cache->add_option("--teacher", teacher, "teacher checkpoint")->required();
  cache->add_option("--out", out, "cache file")->required();
  add_config_flags(cache, common);

  auto* trainc = app.add_subcommand("train", "train the binarized model");
  trainc->add_option("--train", train, "training edge list")->required();
  trainc->add_option("--test", test, "held-out edge list");
  trainc->add_option("--teacher", teacher, "teacher checkpoint")->required();
  trainc->add_option("--cache", cache_path, "pseudo-positive cache")
      ->required();
  trainc->add_option("--out", out, "output prefix")->required();
  trainc->add_option("--epochs", epochs_override,
                     "shorthand for --epochs_student");
  add_config_flags(trainc, common);

  auto* evalc = app.add_subcommand("eval", "rank the test split and report metrics");
  evalc->add_option("--model", model, "model file (.bgr or .bgt)")->required();
  evalc->add_option("--train", train, "training edge list")->required();
  evalc->add_option("--test", test, "held-out edge list")->required();
  evalc->add_option("--ks", ks_text, "comma-separated K values");
  evalc->add_option("--path", path_name, "full|float|bitwise");
  evalc->add_flag("--json", as_json, "emit JSON instead of TSV");
  add_config_flags(evalc, common);

  auto* benchc = app.add_subcommand("bench", "time full-catalog scoring paths");
  benchc->add_option("--model", model, "binarized model")->required();
  benchc->add_option("--queries", queries, "number of query users");
  benchc->add_option("--seed", bench_seed, "query sampling seed");
  benchc->add_option("--threads", common.threads, "worker threads");

  auto* exportc = app.add_subcommand("export-scores", "dump top-K lists as TSV");
  exportc->add_option("--model", model, "binarized model")->required();
  exportc->add_option("--train", train, "training edge list")->required();
  exportc->add_option("--test", test, "held-out edge list");
  exportc->add_option("--idmap", idmap, "id mapping sidecar");
  exportc->add_option("--users", users_arg, "all or comma-separated ids");
  exportc->add_option("--k", k, "list length");
  exportc->add_option("--path", path_name, "float|bitwise");
  exportc->add_option("--out", out, "output file or - for stdout");
  add_config_flags(exportc, common);

  CLI11_PARSE(app, argc, argv);

  try {
    if (!epochs_override.empty()) {
      if (app.got_subcommand(pretrain))
        common.overrides.emplace_back("epochs_teacher", epochs_override);
      else
        common.overrides.emplace_back("epochs_student", epochs_override);
    }
    if (app.got_subcommand(pretrain))
      return run_pretrain(train, test, out, common);
    if (app.got_subcommand(cache))
      return run_cache(train, test, teacher, out, common);
    if (app.got_subcommand(trainc))
      return run_train(train, test, teacher, cache_path, out, common);
    if (app.got_subcommand(evalc))
      return run_eval(model, train, test, ks_text, path_name, as_json, common);
    if (app.got_subcommand(benchc))
      return run_bench(model, queries, bench_seed, common);
    if (app.got_subcommand(exportc))
      return run_export_scores(model, train, test, idmap, users_arg, k,
                               path_name, out, common);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const bitgear::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const bitgear::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
