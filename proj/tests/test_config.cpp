#include <doctest.h>

#include <cmath>

#include <filesystem>
#include <fstream>

#include "splab/config.hpp"
#include "splab/csv.hpp"
#include "splab/experiments.hpp"

using namespace splab;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "cfg.json");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("defaults parse and validate") {
  const auto c = parse_config("{}");
  CHECK(c.regime.epochs == 1);
  CHECK(c.theory.lowrank.ambient_dim == 10);
  CHECK(c.theory.lowrank.subspace_dim == 4);
  CHECK_FALSE(c.theory.lowrank.biases);
  CHECK(c.theory.fullrank.ambient_dim == 6);
}

TEST_CASE("unknown keys are rejected with their line") {
  const std::string text = "{\n  \"regime\": {\n    \"epochs\": 2,\n    \"epohcs\": 3\n  }\n}\n";
  const auto msg = error_of(text);
  CHECK(msg.find("cfg.json:4:") == 0);
  CHECK(msg.find("regime.epohcs") != std::string::npos);
  CHECK(error_of("{\n\"bogus\": 1}").find("cfg.json:2:") == 0);
}

TEST_CASE("validation errors carry the line of the offending key") {
  const auto msg = error_of("{\n  \"name\": \"x\",\n  \"regime\": {\"names\": [\"st_logit\"],\n   \"epochs\": 0}\n}");
  CHECK(msg.find("cfg.json:4:") == 0);
  CHECK(msg.find("regime.epochs") != std::string::npos);
}

TEST_CASE("type errors, bad enums and missing paths") {
  CHECK(error_of("{\"seed\": \"one\"}").find("wrong type for seed") != std::string::npos);
  CHECK(error_of("{\"attack\": {\"norm\": \"l3\"}}").find("l3") != std::string::npos);
  CHECK(error_of("{\"regime\": {\"names\": [\"magic\"]}}").find("magic") != std::string::npos);
  CHECK(error_of("{\"teacher\": {\"checkpoint\": \"/no/such/file.splb\"}}").find("does not exist") !=
        std::string::npos);
  CHECK(error_of("{\"metrics\": {\"attacks\": [\"pgd\"]}}") != "");
  CHECK(error_of("{\"regime\": {\"epochs\": 5, \"epoch_grid\": [6]}}") != "");
  CHECK(error_of("{ not json").find("malformed JSON") != std::string::npos);
}

TEST_CASE("serialize then parse is the identity") {
  const std::string text = R"({
    "name": "rt", "seed": 12, "output": "o",
    "dataset": {"kind": "synthetic", "ambient_dim": 8, "subspace_dim": 3, "train_count": 20, "eval_count": 10},
    "teacher": {"arch": "dense", "hidden": [5, 4], "classes": 3},
    "regime": {"names": ["st_logit", "ccat"], "epochs": 4, "ccat_rho": [5, 10], "epoch_grid": [2, 4],
               "augmentations": ["gaussian"]},
    "attack": {"norm": "l2", "epsilon": 0.25},
    "metrics": {"attacks": ["linf_pgd", "cw"], "n_repeats": 2},
    "theory": {"variants": ["lowrank"], "lowrank": {"seed": 9}}
  })";
  const auto a = parse_config(text);
  const std::string s1 = serialize_config(a);
  const auto b = parse_config(s1);
  CHECK(serialize_config(b) == s1);
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  auto c = a;
  c.seed = 13;
  CHECK(config_hash(c) != config_hash(a));
  CHECK(b.theory.lowrank.seed == 9);
  CHECK(b.attack_spec().norm == Norm::l2);
  CHECK(b.train_config(Regime::ccat).ccat_rho == 5.0);
}

TEST_CASE("csv formatting") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(std::nan("")) == "nan");
  CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
  const auto dir = std::filesystem::temp_directory_path() / "splab_test_csv";
  std::filesystem::create_directories(dir);
  write_curve_csv(dir / "c.csv", "bnc_sorted", 2, {0.5, 0.25});
  CHECK(slurp(dir / "c.csv") == "index,bnc_sorted_layer2\n0,0.5\n1,0.25\n");
  CsvWriter w(dir / "w.csv", {"a", "b"});
  w.field(std::string("x"));
  CHECK_THROWS(w.end_row());
}

TEST_CASE("student widths scale the teacher") {
  Rng rng(1);
  const Network te = make_conv_net(3, 12, 12, {45, 32, 32, 20}, 10, true, rng);
  CHECK(scaled_widths(te, 1.1) == std::vector<std::size_t>{50, 36, 36, 22});
  CHECK(scaled_widths(te, 1.0) == std::vector<std::size_t>{45, 32, 32, 20});
}

TEST_CASE("manifest lists artifacts with the config hash") {
  const auto dir = std::filesystem::temp_directory_path() / "splab_test_manifest";
  std::filesystem::remove_all(dir);
  {
    Manifest m(dir, "abc", "first");
    std::ofstream(m.path("a.csv")) << "x\n";
    m.write();
  }
  {
    Manifest m(dir, "def", "second");
    std::ofstream(m.path("b.csv")) << "y\n";
    m.write();
  }
  const std::string text = slurp(dir / "manifest.json");
  CHECK(text.find("\"a.csv\"") != std::string::npos);
  CHECK(text.find("\"abc\"") != std::string::npos);
  CHECK(text.find("\"def\"") != std::string::npos);
}
