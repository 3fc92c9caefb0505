#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "bitgear/config.hpp"
#include "bitgear/model_io.hpp"
#include "bitgear/rng.hpp"
#include "test_util.hpp"

#include "json.hpp"

using namespace bitgear;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::filesystem::remove(path); }
};

}  // namespace

TEST_CASE("teacher checkpoint round trip narrows to float32") {
  Rng rng(81);
  const auto base = testutil::random_table(7, 5, rng);
  TempFile f("ckpt_test.bgt");
  save_teacher_checkpoint(f.path, base);
  const auto back = load_teacher_checkpoint(f.path);
  CHECK(back.rows == base.rows);
  CHECK(back.dim == base.dim);
  for (std::size_t k = 0; k < base.values.size(); ++k)
    CHECK(back.values[k] ==
          static_cast<double>(static_cast<float>(base.values[k])));
}

TEST_CASE("readers reject unknown magic and version") {
  TempFile f("bad_magic.bin");
  {
    std::ofstream out(f.path, std::ios::binary);
    out << "NOPE";
    const char zeros[16] = {};
    out.write(zeros, sizeof(zeros));
  }
  CHECK_THROWS_AS(load_teacher_checkpoint(f.path), FormatError);
  CHECK_THROWS_AS(load_binarized_table(f.path), FormatError);
  CHECK_THROWS_AS(load_teacher_cache(f.path), FormatError);

  TempFile v("bad_version.bin");
  {
    std::ofstream out(v.path, std::ios::binary);
    out << "BGT1";
    const unsigned char ver[4] = {9, 0, 0, 0};
    out.write(reinterpret_cast<const char*>(ver), 4);
    const char zeros[8] = {};
    out.write(zeros, sizeof(zeros));
  }
  CHECK_THROWS_AS(load_teacher_checkpoint(v.path), FormatError);
}

TEST_CASE("truncated files are rejected") {
  Rng rng(82);
  const auto t = testutil::random_binarized_table(3, 4, 64, 2, rng);
  TempFile f("trunc.bgr");
  save_binarized_table(f.path, t);
  const auto size = std::filesystem::file_size(f.path);
  std::filesystem::resize_file(f.path, size - 5);
  CHECK_THROWS_AS(load_binarized_table(f.path), FormatError);
}

TEST_CASE("teacher cache file round trip is exact") {
  Rng rng(83);
  TeacherCache c;
  c.num_users = 4;
  c.num_layers = 3;
  c.top_r = 5;
  c.items.resize(4 * 3 * 5);
  for (auto& it : c.items) it = rng.index(100);
  TempFile f("cache_test.bgc");
  save_teacher_cache(f.path, c);
  const auto back = load_teacher_cache(f.path);
  CHECK(back.num_users == c.num_users);
  CHECK(back.num_layers == c.num_layers);
  CHECK(back.top_r == c.top_r);
  CHECK(back.items == c.items);
}

TEST_CASE("id index sidecar round trip") {
  IdIndex users, items;
  users.get_or_add("alice");
  users.get_or_add("bob with spaces");
  items.get_or_add("item:1");
  TempFile f("idmap_test.tsv");
  save_id_index(f.path, users, items);
  const auto [u, i] = load_id_index(f.path);
  CHECK(u.size() == 2);
  CHECK(u.token(1) == "bob with spaces");
  CHECK(i.token(0) == "item:1");
  CHECK(u.find("alice").value() == 0);
}

TEST_CASE("config parsing applies keys and rejects unknown ones") {
  const auto cfg = parse_config_text(
      "# comment\n"
      "d = 64\n"
      "L = 3\n"
      "eta = 5e-4\n"
      "estimator = tanh\n"
      "wk_scheme = exp_rank\n"
      "norm_mode = left\n"
      "seed = 99\n");
  CHECK(cfg.d == 64);
  CHECK(cfg.layers == 3);
  CHECK(cfg.eta == doctest::Approx(5e-4));
  CHECK(cfg.estimator == Estimator::Tanh);
  CHECK(cfg.wk_scheme == WkScheme::ExpRank);
  CHECK(cfg.norm_mode == NormMode::Left);
  CHECK(cfg.seed == 99);

  CHECK_THROWS_AS(parse_config_text("momentum = 0.9\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text("d = notanumber\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text("d 64\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text("eta = -1\n"), std::invalid_argument);
}

TEST_CASE("shipped dataset configs carry the documented defaults") {
  const auto ml = parse_config_file(
      std::string(BITGEAR_SOURCE_DIR) + "/configs/movielens1m.conf");
  CHECK(ml.batch_size == 2048);
  CHECK(ml.d == 256);
  CHECK(ml.eta == doctest::Approx(1e-3));
  CHECK(ml.lambda == doctest::Approx(1e-4));
  CHECK(ml.lambda1 == doctest::Approx(1.0));
  CHECK(ml.lambda2 == doctest::Approx(0.1));
  CHECK(ml.gamma == doctest::Approx(1.0));
  CHECK(ml.layers == 2);

  const auto amazon = parse_config_file(
      std::string(BITGEAR_SOURCE_DIR) + "/configs/amazon-book.conf");
  CHECK(amazon.eta == doctest::Approx(5e-4));
  CHECK(amazon.lambda == doctest::Approx(1e-6));
}

TEST_CASE("config round trips through its own text form") {
  TrainingConfig cfg;
  cfg.d = 48;
  cfg.lambda2 = 0.25;
  cfg.wl_scheme = WlScheme::InvRemaining;
  const auto back = parse_config_text(config_to_text(cfg));
  CHECK(back.d == 48);
  CHECK(back.lambda2 == doctest::Approx(0.25));
  CHECK(back.wl_scheme == WlScheme::InvRemaining);
}

TEST_CASE("atomic writes land complete and digests track content") {
  TempFile f("manifest_test.json");
  nlohmann::json j;
  j["seed"] = 7;
  j["inputs"] = {{"train.txt", "deadbeef"}};
  write_file_atomic(f.path, j.dump(2));
  CHECK_FALSE(std::filesystem::exists(f.path + ".tmp"));
  std::ifstream in(f.path);
  nlohmann::json back;
  in >> back;
  CHECK(back["seed"] == 7);

  const auto d1 = file_digest(f.path);
  write_file_atomic(f.path, j.dump());
  const auto d2 = file_digest(f.path);
  CHECK(d1 != d2);
  write_file_atomic(f.path, j.dump(2));
  CHECK(file_digest(f.path) == d1);
}
