#include <fstream>
#include <iterator>
#include <sstream>

#include "commands.hpp"
#include "doctest.h"
#include "icethick/groundtruth.hpp"
#include "icethick/training.hpp"
#include "json.hpp"
#include "scratch_dir.hpp"

using namespace icethick;
namespace fs = std::filesystem;

namespace {

struct Captured {
  std::ostringstream out, err;
  cli::Streams io() { return {out, err}; }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

// x^2 whose backward forgets the factor 2.
Tensor<double> broken_square(const Tensor<double>& x) {
  std::vector<double> v(x.data().begin(), x.data().end());
  for (auto& e : v) e *= e;
  Tensor<double> out(x.shape(), std::move(v));
  if (auto* tape = GradientTape<double>::active(); tape != nullptr && x.requires_grad()) {
    out.node()->requires_grad = true;
    auto xn = x.node();
    tape->record("broken_square", {xn}, out.node(), [xn](TensorNode<double>& o) {
      auto& g = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * xn->data[i];
    });
  }
  return out;
}

cli::Overrides seeded(std::uint64_t seed) {
  cli::Overrides o;
  o.seed = seed;
  return o;
}

}  // namespace

TEST_CASE("extract: valid, empty, corrupt and missing directories") {
  ScratchDir dir("cli_extract");
  fs::create_directories(dir.path / "one");
  write_mask(dir.path / "one/a.pgm", LayerMask(2, 2, {1, 1, 0, 0}));
  Captured c;
  CHECK(cli::cmd_extract(dir.path / "one", dir.path / "one.csv", c.io()) == 0);
  const auto rows = read_thickness_csv(dir.path / "one.csv");
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].id == "a");
  CHECK(rows[0].values[0] == 1.0);
  CHECK(fs::exists(dir.path / "one.csv.run_config.json"));

  fs::create_directories(dir.path / "empty");
  Captured e;
  CHECK(cli::cmd_extract(dir.path / "empty", dir.path / "empty.csv", e.io()) == 0);
  CHECK(count_lines(slurp(dir.path / "empty.csv")) == 1);
  CHECK(e.err.str().find("warning") != std::string::npos);

  fs::create_directories(dir.path / "bad");
  std::ofstream(dir.path / "bad/broken.pgm") << "P5\n9 9\n255\n";
  Captured b;
  CHECK(cli::cmd_extract(dir.path / "bad", dir.path / "bad.csv", b.io()) == 2);
  CHECK(b.err.str().find("broken.pgm") != std::string::npos);

  Captured m;
  CHECK(cli::cmd_extract(dir.path / "nowhere", dir.path / "x.csv", m.io()) == 2);
}

TEST_CASE("synth: manifest size, byte-identical reruns, fit violation") {
  ScratchDir dir("cli_synth");
  Captured c;
  REQUIRE(cli::cmd_synth(std::nullopt, 4, 2, seeded(7), dir.path / "a", c.io()) == 0);
  const auto manifest = nlohmann::json::parse(slurp(dir.path / "a/manifest.json"));
  CHECK(manifest.size() == 6);
  CHECK(fs::exists(dir.path / "a/run_config.json"));
  REQUIRE(cli::cmd_synth(std::nullopt, 4, 2, seeded(7), dir.path / "b", c.io()) == 0);
  for (const char* f : {"manifest.json", "thickness.csv", "images/test_00001.pgm", "masks/train_00003.pgm"})
    CHECK(slurp(dir.path / "a" / f) == slurp(dir.path / "b" / f));

  std::ofstream(dir.path / "tight.json") << R"({"num_layers": 20})";
  Captured bad;
  CHECK(cli::cmd_synth(dir.path / "tight.json", 1, 1, seeded(1), dir.path / "c", bad.io()) == 2);
  CHECK(bad.err.str().find("do not fit") != std::string::npos);
}

TEST_CASE("train, eval and report round trip") {
  ScratchDir dir("cli_train");
  Captured c;
  REQUIRE(cli::cmd_synth(std::nullopt, 4, 2, seeded(3), dir.path / "data", c.io()) == 0);
  const fs::path manifest = dir.path / "data/manifest.json";
  cli::Overrides flags = seeded(11);
  flags.epochs = 1;
  flags.batch_size = 4;

  Captured t1, t2;
  REQUIRE(cli::cmd_train(manifest, "mini_resnet", std::nullopt, flags, dir.path / "runs/r1", t1.io()) == 0);
  for (const char* f : {"model.ictk", "model.ictk.json", "loss.csv", "run_config.json"})
    CHECK(fs::exists(dir.path / "runs/r1" / f));
  CHECK(t1.out.str().find("final train_mae_px=") != std::string::npos);
  REQUIRE(cli::cmd_train(manifest, "mini_resnet", std::nullopt, flags, dir.path / "runs/r2", t2.io()) == 0);
  CHECK(slurp(dir.path / "runs/r1/loss.csv") == slurp(dir.path / "runs/r2/loss.csv"));
  CHECK(slurp(dir.path / "runs/r1/model.ictk") == slurp(dir.path / "runs/r2/model.ictk"));

  // The saved run config reproduces the run.
  Captured t3;
  REQUIRE(cli::cmd_train(manifest, std::nullopt, dir.path / "runs/r1/run_config.json", {},
                         dir.path / "runs/r3", t3.io()) == 0);
  CHECK(slurp(dir.path / "runs/r1/loss.csv") == slurp(dir.path / "runs/r3/loss.csv"));

  Captured unknown;
  CHECK(cli::cmd_train(manifest, "resnet9000", std::nullopt, flags, dir.path / "runs/x", unknown.io()) == 2);
  CHECK(unknown.err.str().find("mini_mobilenet") != std::string::npos);

  // Evaluating on the train split reproduces the last loss-CSV row.
  Captured ev;
  REQUIRE(cli::cmd_eval(dir.path / "runs/r1/model.ictk", manifest, "train", dir.path / "evals", ev.io()) == 0);
  const auto rec = nlohmann::json::parse(slurp(dir.path / "evals/eval_train.json"));
  std::istringstream csv(slurp(dir.path / "runs/r1/loss.csv"));
  std::string line, last;
  while (std::getline(csv, line)) last = line;
  const double logged = std::stod(last.substr(last.find(',') + 1));
  CHECK(rec.at("mae_px").get<double>() == doctest::Approx(logged).epsilon(1e-5));
  CHECK(rec.at("mae_cm").get<double>() == doctest::Approx(4.0 * logged).epsilon(1e-5));

  // Manifest resolution drives the cm line.
  {
    auto list = nlohmann::json::parse(slurp(manifest));
    std::ofstream(dir.path / "data/res.json") << nlohmann::json{{"resolution_cm_per_pixel", 2.5}, {"samples", list}}.dump();
  }
  Captured ev2;
  REQUIRE(cli::cmd_eval(dir.path / "runs/r1/model.ictk", dir.path / "data/res.json", "test", dir.path / "evals2", ev2.io()) == 0);
  CHECK(ev2.out.str().find("at 2.50000 cm/px") != std::string::npos);

  // A split with no samples.
  {
    auto list = nlohmann::json::parse(slurp(manifest));
    nlohmann::json only_train = nlohmann::json::array();
    for (const auto& e : list)
      if (e.at("split") == "train") only_train.push_back(e);
    std::ofstream(dir.path / "data/train_only.json") << only_train.dump();
  }
  Captured none;
  CHECK(cli::cmd_eval(dir.path / "runs/r1/model.ictk", dir.path / "data/train_only.json", "test", std::nullopt, none.io()) == 2);

  // Dimension mismatch between checkpoint and data.
  Captured small;
  REQUIRE(cli::cmd_synth(std::nullopt, 1, 1, seeded(1), dir.path / "small", small.io()) == 0);
  {
    std::ofstream(dir.path / "scene64w.json") << R"({"width": 64})";
  }
  REQUIRE(cli::cmd_synth(dir.path / "scene64w.json", 1, 1, seeded(1), dir.path / "d64w", small.io()) == 0);
  Captured mismatch;
  CHECK(cli::cmd_eval(dir.path / "runs/r1/model.ictk", dir.path / "d64w/manifest.json", "test", std::nullopt, mismatch.io()) == 2);

  // r1 and r2 share a backbone, r3 too: three rows, disambiguated.
  Captured rep1, rep2;
  REQUIRE(cli::cmd_report(dir.path / "runs", rep1.io()) == 0);
  const std::string csv1 = slurp(dir.path / "runs/report.csv");
  CHECK(count_lines(csv1) == 4);
  CHECK(csv1.find("mini_resnet@r1") != std::string::npos);
  CHECK(rep1.out.str().find("best") != std::string::npos);
  REQUIRE(cli::cmd_report(dir.path / "runs", rep2.io()) == 0);
  CHECK(slurp(dir.path / "runs/report.csv") == csv1);
}

TEST_CASE("report: single row, five backbones, empty directory") {
  ScratchDir dir("cli_report");
  const char* kinds[] = {"mini_resnet", "mini_densenet", "mini_inception", "mini_xception", "mini_mobilenet"};
  for (int i = 0; i < 5; ++i) {
    const fs::path d = dir.path / "five" / kinds[i];
    fs::create_directories(d);
    std::ofstream(d / "eval_train.json") << nlohmann::json{{"backbone", kinds[i]}, {"split", "train"}, {"mae_px", 0.5 + i}}.dump();
    std::ofstream(d / "eval_test.json") << nlohmann::json{{"backbone", kinds[i]}, {"split", "test"}, {"mae_px", 5.0 - i}}.dump();
  }
  Captured c;
  REQUIRE(cli::cmd_report(dir.path / "five", c.io()) == 0);
  const std::string csv = slurp(dir.path / "five/report.csv");
  CHECK(count_lines(csv) == 6);
  CHECK(csv.find("\nmini_mobilenet,") == csv.find('\n'));
  CHECK(count_lines(c.out.str()) == 6);

  fs::create_directories(dir.path / "one/r");
  std::ofstream(dir.path / "one/r/eval_train.json") << R"({"backbone":"mini_resnet","split":"train","mae_px":0.5})";
  std::ofstream(dir.path / "one/r/eval_test.json") << R"({"backbone":"mini_resnet","split":"test","mae_px":1.0})";
  Captured one;
  REQUIRE(cli::cmd_report(dir.path / "one", one.io()) == 0);
  CHECK(slurp(dir.path / "one/report.csv") ==
        "backbone,train_mae_px,test_mae_px,train_mae_cm,test_mae_cm\n"
        "mini_resnet,0.500000,1.00000,2.00000,4.00000\n");

  fs::create_directories(dir.path / "empty");
  Captured e;
  CHECK(cli::cmd_report(dir.path / "empty", e.io()) == 2);
}

TEST_CASE("gradcheck: built-in suite passes, a broken backward rule fails by name") {
  const auto cases = builtin_gradcheck_cases();
  Captured ok;
  CHECK(cli::cmd_gradcheck(cases, ok.io()) == 0);
  CHECK(count_lines(ok.out.str()) == cases.size() + 1);

  std::vector<GradCheckCase> broken = cases;
  broken.push_back({"broken_square", [] {
    const Tensor<double> x({3}, {0.5, -1.0, 2.0}, true);
    return check_gradients("broken_square", [](auto in) { return sum(broken_square(in[0])); },
                           {x}, 1e-4, 1e-6);
  }});
  Captured bad;
  CHECK(cli::cmd_gradcheck(broken, bad.io()) == 1);
  const std::string out = bad.out.str();
  CHECK(out.find("FAIL broken_square max_rel_error=") != std::string::npos);
  CHECK(out.find("PASS conv2d") != std::string::npos);
}
