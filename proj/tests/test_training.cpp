#include <cmath>
#include <fstream>
#include <iterator>

#include "doctest.h"
#include "icethick/error.hpp"
#include "icethick/synthgen.hpp"
#include "icethick/training.hpp"
#include "oracles.hpp"
#include "scratch_dir.hpp"

using namespace icethick;
using oracle::as_double;

namespace {

ParameterStore<float> scalar_param(float value) {
  ParameterStore<float> p;
  p.add("theta", Tensor<float>({1}, {value}, true));
  return p;
}

// First Adam step in closed form:
// alpha * (1-b1) g / (1-b1) / (sqrt((1-b2) g^2 / (1-b2)) + eps).
double first_step_oracle(double g, const TrainConfig& c) {
  const double m_hat = (1.0 - c.beta1) * g / (1.0 - c.beta1);
  const double v_hat = (1.0 - c.beta2) * g * g / (1.0 - c.beta2);
  return c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
}

ArchitectureSpec tiny() {
  ArchitectureSpec s;
  s.input_height = 8;
  s.input_width = 16;
  s.stem_channels = 4;
  s.stage_widths = {4, 4, 8};
  s.blocks_per_stage = 1;
  s.head_hidden = 16;
  return s;
}

LoadedDataset tiny_dataset(std::size_t n, std::uint64_t seed) {
  SceneSpec s;
  s.height = 8;
  s.width = 16;
  s.num_layers = 2;
  s.mean_layer_thickness_px = 2.0;
  s.undulation_amplitude_px = 0.5;
  std::vector<float> images, targets;
  LoadedDataset d;
  for (std::size_t i = 0; i < n; ++i) {
    const auto g = generate_scene(s, seed + i);
    images.insert(images.end(), g.image.values.begin(), g.image.values.end());
    for (double t : g.target) targets.push_back(static_cast<float>(t));
    d.ids.push_back("s" + std::to_string(i));
  }
  d.images = Tensor<float>({n, 1, 8, 16}, images);
  d.targets = Tensor<float>({n, kNumLayers}, targets);
  return d;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("train config validation and JSON") {
  TrainConfig c;
  CHECK(c.epochs == 100);
  CHECK(c.learning_rate == 1e-4);
  CHECK(c.batch_size == 32);
  CHECK_NOTHROW(validate(c));
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = {};
  c.beta2 = 1.0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = {};
  c.seed = 99;
  c.shuffle = false;
  CHECK(train_config_from_json(to_json(c)) == c);
  CHECK_THROWS_AS(train_config_from_json({{"momentum", 0.9}}), ConfigError);
}

TEST_CASE("first Adam step has magnitude close to the learning rate") {
  TrainConfig c;
  for (double g : {1e-3, -1e-3, 0.02, -0.7, 5.0, 1e4}) {
    CAPTURE(g);
    auto p = scalar_param(1.0f);
    auto state = AdamState::zeros_like(p);
    const std::vector<std::vector<float>> grads{{static_cast<float>(g)}};
    adam_step(p, grads, state, c);
    const double moved = 1.0 - static_cast<double>(p[0][0]);
    CHECK(std::abs(moved) == doctest::Approx(c.learning_rate).epsilon(0.01));
    CHECK(moved == doctest::Approx(first_step_oracle(static_cast<float>(g), c)).epsilon(1e-3));
    CHECK(state.t == 1);
  }
}

TEST_CASE("zero gradient and zero learning rate leave parameters unchanged") {
  TrainConfig c;
  auto p = scalar_param(0.25f);
  auto state = AdamState::zeros_like(p);
  adam_step(p, std::vector<std::vector<float>>{{0.0f}}, state, c);
  CHECK(p[0][0] == 0.25f);

  c.learning_rate = 0.0;  // bypasses validate() on purpose
  auto q = scalar_param(0.25f);
  auto s2 = AdamState::zeros_like(q);
  for (int i = 0; i < 3; ++i) adam_step(q, std::vector<std::vector<float>>{{0.5f}}, s2, c);
  CHECK(q[0][0] == 0.25f);
  CHECK(s2.t == 3);
  for (float v : s2.v[0]) CHECK(v >= 0.0f);
}

TEST_CASE("ten Adam steps on theta^2 decrease the objective monotonically") {
  TrainConfig c;
  c.learning_rate = 0.1;
  auto p = scalar_param(1.0f);
  auto state = AdamState::zeros_like(p);
  double f = 1.0;
  for (int i = 0; i < 10; ++i) {
    const float theta = p[0][0];
    adam_step(p, std::vector<std::vector<float>>{{2.0f * theta}}, state, c);
    const double next = static_cast<double>(p[0][0]) * p[0][0];
    CHECK(next < f);
    f = next;
  }
}

TEST_CASE("non-finite gradient aborts naming the parameter") {
  TrainConfig c;
  auto p = scalar_param(1.0f);
  auto state = AdamState::zeros_like(p);
  try {
    adam_step(p, std::vector<std::vector<float>>{{std::nanf("")}}, state, c);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("theta") != std::string::npos);
  }
  CHECK(p[0][0] == 1.0f);
  CHECK(state.t == 0);
}

TEST_CASE("evaluate matches hand-computed MAE and batch size does not matter") {
  auto m = Model<float>::build(BackboneKind::mini_resnet, tiny(), 3);
  const auto data = tiny_dataset(5, 40);
  // Targets equal to the model's own outputs give zero error.
  LoadedDataset same = data;
  same.targets = m.predict(data.images);
  CHECK(evaluate(m, same) == 0.0);

  const auto pred = as_double(m.predict(data.images));
  const auto tgt = as_double(data.targets);
  double total = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < 27; ++k) s += std::abs(pred[i * 27 + k] - tgt[i * 27 + k]);
    total += s / 27.0;
  }
  CHECK(evaluate(m, data) == doctest::Approx(total / 5.0).epsilon(1e-6));
  CHECK(evaluate(m, data, 1) == doctest::Approx(evaluate(m, data, 32)).epsilon(1e-5));
  CHECK_THROWS_AS(evaluate(m, LoadedDataset{}), ContractError);
}

TEST_CASE("mean baseline") {
  LoadedDataset a, b;
  std::vector<float> ta(2 * 27, 0.0f), tb(27, 0.0f);
  ta[0] = 1.0f;
  ta[27] = 3.0f;
  tb[0] = 4.0f;
  a.targets = Tensor<float>({2, 27}, ta);
  a.ids = {"x", "y"};
  b.targets = Tensor<float>({1, 27}, tb);
  b.ids = {"z"};
  CHECK(mean_baseline_mae(a, b) == doctest::Approx(2.0 / 27.0));
}

TEST_CASE("one epoch with batch >= n takes exactly one optimizer step") {
  auto m = Model<float>::build(BackboneKind::mini_resnet, tiny(), 3);
  const auto data = tiny_dataset(4, 10);
  TrainConfig c;
  c.epochs = 1;
  c.batch_size = 8;
  AdamState adam;
  const auto rec = train(m, data, c, nullptr, &adam);
  CHECK(adam.t == 1);
  REQUIRE(rec.rows.size() == 1);
  CHECK(rec.rows[0].epoch == 1);
  CHECK_FALSE(rec.rows[0].test_mae_px.has_value());
  CHECK(rec.rows[0].train_mae_px == doctest::Approx(evaluate(m, data)).epsilon(1e-12));

  c.epochs = 2;
  c.batch_size = 3;
  AdamState partial;
  train(m, data, c, &data, &partial);
  CHECK(partial.t == 4);  // ceil(4/3) steps per epoch
  CHECK_THROWS_AS(train(m, LoadedDataset{}, c), ContractError);
}

TEST_CASE("training is deterministic and the loss record CSV is stable") {
  const auto data = tiny_dataset(6, 20);
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 4;
  c.learning_rate = 1e-3;
  c.seed = 5;
  auto a = Model<float>::build(BackboneKind::mini_xception, tiny(), 9);
  auto b = Model<float>::build(BackboneKind::mini_xception, tiny(), 9);
  const auto ra = train(a, data, c, &data);
  const auto rb = train(b, data, c, &data);
  CHECK(ra.to_csv() == rb.to_csv());
  for (std::size_t i = 0; i < a.parameters().size(); ++i)
    CHECK(as_double(a.parameters()[i]) == as_double(b.parameters()[i]));
  const std::string csv = ra.to_csv();
  CHECK(csv.rfind("epoch,train_mae_px,test_mae_px\n1,", 0) == 0);
  LossRecord blank;
  blank.rows.push_back({1, 0.5, std::nullopt});
  CHECK(blank.to_csv() == "epoch,train_mae_px,test_mae_px\n1,0.500000,\n");
}

TEST_CASE("ICTK round trip and corrupt input") {
  ScratchDir dir("ictk");
  const std::vector<NamedTensor> ts{{"a", {2, 3}, {1, 2, 3, 4, 5, 6}}, {"b.c", {}, {7}}};
  write_ictk(dir.path / "x.ictk", ts);
  const std::string bytes = slurp(dir.path / "x.ictk");
  CHECK(bytes.substr(0, 4) == "ICTK");
  // magic + version + count + (4+1+4+16+24) + (4+3+4+0+4)
  CHECK(bytes.size() == 12 + 49 + 15);
  const auto back = read_ictk(dir.path / "x.ictk");
  REQUIRE(back.size() == 2);
  CHECK(back[0].name == "a");
  CHECK(back[0].shape == Shape{2, 3});
  CHECK(back[0].values == ts[0].values);
  CHECK(back[1].shape.empty());
  {
    std::ofstream f(dir.path / "bad.ictk", std::ios::binary);
    f << bytes.substr(0, bytes.size() - 2);
  }
  CHECK_THROWS_AS(read_ictk(dir.path / "bad.ictk"), IoError);
}

TEST_CASE("checkpoint save/load reproduces outputs bit for bit, with optimizer state") {
  ScratchDir dir("ckpt");
  auto m = Model<float>::build(BackboneKind::mini_densenet, tiny(), 4);
  const auto data = tiny_dataset(4, 60);
  TrainConfig c;
  c.epochs = 1;
  c.batch_size = 2;
  AdamState adam;
  train(m, data, c, nullptr, &adam);
  save_checkpoint(dir.path / "m.ictk", m, &adam);
  CHECK(std::filesystem::exists(dir.path / "m.ictk.json"));
  const auto ck = load_checkpoint(dir.path / "m.ictk");
  CHECK(ck.model.kind() == BackboneKind::mini_densenet);
  CHECK(ck.model.spec() == tiny());
  CHECK(ck.model.parameters().names() == m.parameters().names());
  CHECK(as_double(ck.model.predict(data.images)) == as_double(m.predict(data.images)));
  REQUIRE(ck.adam.has_value());
  CHECK(ck.adam->t == adam.t);
  CHECK(ck.adam->m == adam.m);
  CHECK(ck.adam->v == adam.v);

  save_checkpoint(dir.path / "plain.ictk", m);
  CHECK_FALSE(load_checkpoint(dir.path / "plain.ictk").adam.has_value());
  CHECK_THROWS_AS(load_checkpoint(dir.path / "missing.ictk"), IoError);
}

TEST_CASE("report table sorts, flags the best row and converts units") {
  const auto one = report_table({{"mini_resnet", 0.5, 1.0}});
  CHECK(one.csv ==
        "backbone,train_mae_px,test_mae_px,train_mae_cm,test_mae_cm\n"
        "mini_resnet,0.500000,1.00000,2.00000,4.00000\n");
  CHECK(one.best == 0);
  CHECK(one.table.find("best") != std::string::npos);

  const auto r = report_table({{"a", 1, 2.0}, {"b", 1, 1.5}, {"c", 1, 2.0}, {"d", 1, 1.5}});
  REQUIRE(r.rows.size() == 4);
  CHECK(r.rows[0].backbone == "b");
  CHECK(r.rows[1].backbone == "d");
  CHECK(r.rows[2].backbone == "a");
  CHECK(r.rows[3].backbone == "c");

  const auto published = report_table({{"resnet50", 0.595, 1.251}});
  CHECK(published.csv.find("resnet50,0.595000,1.25100,2.38000,5.00400") != std::string::npos);
  CHECK_THROWS_AS(report_table({}), ContractError);
}
