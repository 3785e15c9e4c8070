#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "bat/config.hpp"
#include "bat/errors.hpp"
#include "bat/optim.hpp"
#include "bat/train.hpp"
#include "test_support.hpp"

using namespace bat;
namespace fs = std::filesystem;

namespace {

ParamSet two_params(double a, double b) {
  ParamSet p = init_dense_net(std::vector<int>{1, 1}, 0).params;
  Vector flat(2);
  flat << a, b;
  p.assign_flat(flat);
  return p;
}

TrainConfig blobs_config(Method method, double eps, int epochs) {
  TrainConfig c;
  c.loss.method = method;
  c.loss.beta = 5.0;
  c.loss.bridges_m = 2;
  c.attack.epsilon = eps;
  c.attack.steps = 5;
  c.attack.step_size = eps > 0.0 ? 2.5 * eps / 5.0 : 0.01;
  c.attack.random_start = true;
  c.eval_attack.epsilon = eps;
  c.eval_attack.steps = 10;
  c.eval_attack.step_size = eps > 0.0 ? 2.5 * eps / 10.0 : 0.01;
  c.optimizer.kind = OptimizerKind::kAdam;
  c.optimizer.rate = 0.01;
  c.hidden_layers = {16};
  c.epochs = epochs;
  c.batch_size = 32;
  c.seed = 5;
  c.data.source = DataSource::kGaussBlobs;
  c.data.n = 500;
  c.data.seed = 5;
  return c;
}

TrainResult run(const TrainConfig& c) {
  const auto [train_set, test_set] = load_data(c.data);
  return train(c, train_set, test_set);
}

}  // namespace

TEST_CASE("sgd momentum examples") {
  OptimizerConfig h;
  h.kind = OptimizerKind::kSgdMomentum;
  h.momentum = 0.0;
  ParamSet p = two_params(1.0, -2.0);
  SgdMomentumState s{ParamSet::zeros_like(p)};
  sgd_momentum_step(p, ParamSet::zeros_like(p), s, h, 0.1);
  CHECK(p.flatten() == two_params(1.0, -2.0).flatten());

  sgd_momentum_step(p, two_params(0.5, 1.0), s, h, 0.1);
  CHECK(p.flatten()[0] == 1.0 - 0.1 * 0.5);
  CHECK(p.flatten()[1] == -2.0 - 0.1 * 1.0);

  // momentum 0.9: v1 = g, v2 = 0.9 g + g
  h.momentum = 0.9;
  ParamSet q = two_params(0.0, 0.0);
  SgdMomentumState sq{ParamSet::zeros_like(q)};
  sgd_momentum_step(q, two_params(1.0, 1.0), sq, h, 0.1);
  sgd_momentum_step(q, two_params(1.0, 1.0), sq, h, 0.1);
  CHECK(q.flatten()[0] == doctest::Approx(-0.1 - 0.19).epsilon(1e-15));

  // weight decay enters as an L2 gradient term
  h.momentum = 0.0;
  h.weight_decay = 0.5;
  ParamSet w = two_params(2.0, 0.0);
  SgdMomentumState sw{ParamSet::zeros_like(w)};
  sgd_momentum_step(w, ParamSet::zeros_like(w), sw, h, 0.1);
  CHECK(w.flatten()[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0).epsilon(1e-15));

  CHECK_THROWS_AS(sgd_momentum_step(w, init_dense_net(std::vector<int>{2, 1}, 0).params, sw, h, 0.1),
                  DimensionMismatch);
}

TEST_CASE("adam first step moves each coordinate by about the rate") {
  OptimizerConfig h;
  h.kind = OptimizerKind::kAdam;
  ParamSet p = two_params(1.0, 1.0);
  AdamState s{ParamSet::zeros_like(p), ParamSet::zeros_like(p), 0};
  const double g0 = 0.3, g1 = -7.0;
  adam_step(p, two_params(g0, g1), s, h, 0.01);
  // m_hat = g, v_hat = g^2: step = rate * g / (|g| + eps)
  CHECK(p.flatten()[0] == doctest::Approx(1.0 - 0.01 * g0 / (std::abs(g0) + 1e-8)).epsilon(1e-14));
  CHECK(p.flatten()[1] == doctest::Approx(1.0 - 0.01 * g1 / (std::abs(g1) + 1e-8)).epsilon(1e-14));
  CHECK(s.step == 1);
}

TEST_CASE("learning-rate schedules") {
  ScheduleConfig s;
  s.kind = ScheduleKind::kConstant;
  s.base_rate = 0.05;
  CHECK(lr_at(s, 0, 0) == 0.05);
  CHECK(lr_at(s, 99, 7) == 0.05);

  s.kind = ScheduleKind::kStepDecay;
  s.base_rate = 0.001;
  s.decay_epochs = {30, 40};
  CHECK(lr_at(s, 29, 0) == 0.001);
  CHECK(lr_at(s, 35, 0) == doctest::Approx(0.0001).epsilon(1e-12));
  CHECK(lr_at(s, 45, 0) == doctest::Approx(0.00001).epsilon(1e-12));

  s.kind = ScheduleKind::kCyclic;
  s.max_rate = 0.3;
  s.total_epochs = 30;
  s.batches_per_epoch = 10;
  CHECK(lr_at(s, 0, 0) == 0.0);
  CHECK(lr_at(s, 15, 0) == 0.3);
  CHECK(lr_at(s, 7, 5) == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(lr_at(s, 22, 5) == doctest::Approx(0.15).epsilon(1e-12));
}

TEST_CASE("config json round trip and strictness") {
  TrainConfig c = blobs_config(Method::kTRADES, 0.1, 3);
  c.schedule.kind = ScheduleKind::kStepDecay;
  c.schedule.decay_epochs = {2};
  const nlohmann::json doc = to_json(c);
  const TrainConfig back = train_config_from_json(doc);
  CHECK(to_json(back) == doc);

  nlohmann::json extra = doc;
  extra["learning_rate"] = 0.1;
  CHECK_THROWS_AS(train_config_from_json(extra), ConfigError);
  nlohmann::json nested = doc;
  nested["attack"]["eps"] = 0.1;
  CHECK_THROWS_AS(train_config_from_json(nested), ConfigError);
  nlohmann::json bad_enum = doc;
  bad_enum["loss"]["method"] = "MART";
  CHECK_THROWS_AS(train_config_from_json(bad_enum), ConfigError);
  nlohmann::json zero_epochs = doc;
  zero_epochs["epochs"] = 0;
  CHECK_THROWS_AS(train_config_from_json(zero_epochs), ConfigError);

  // missing keys keep their defaults
  const TrainConfig sparse = train_config_from_json({{"epochs", 4}});
  CHECK(sparse.epochs == 4);
  CHECK(sparse.loss.method == Method::kBAT);
}

TEST_CASE("inner loss follows the method unless pinned") {
  TrainConfig c = blobs_config(Method::kTRADES, 0.1, 1);
  CHECK(c.training_attack().inner_loss == InnerLoss::kKlFromClean);
  c.loss.method = Method::kBAT;
  CHECK(c.training_attack().inner_loss == InnerLoss::kCrossEntropy);
}

TEST_CASE("evaluation contracts") {
  const TrainResult trained = run(blobs_config(Method::kAT, 0.1, 3));
  const auto [train_set, test_set] = load_data(blobs_config(Method::kAT, 0.1, 3).data);
  const DenseNet& net = trained.final_checkpoint.net;

  AttackConfig none;
  Rng rng(1);
  const EvalResult clean = evaluate(net, test_set, none, rng);
  CHECK(clean.robust_acc == clean.clean_acc);
  CHECK(clean.records.size() == static_cast<std::size_t>(test_set.size()));

  double previous = clean.robust_acc;
  for (double eps : {0.05, 0.1, 0.2, 0.3}) {
    AttackConfig a;
    a.epsilon = eps;
    a.steps = 10;
    a.step_size = 2.5 * eps / 10;
    a.restarts = 2;
    a.random_start = true;
    Rng r(2);
    const EvalResult e = evaluate(net, test_set, a, r);
    CHECK(e.robust_acc <= e.clean_acc);
    CHECK(e.robust_acc <= previous);
    CHECK(e.decomposition.robust_errors == e.decomposition.natural_errors + e.decomposition.boundary_errors);
    CHECK(e.decomposition.r_rob == doctest::Approx(1.0 - e.robust_acc).epsilon(1e-15));
    previous = e.robust_acc;
  }
}

TEST_CASE("constant model on balanced ten-class data scores the class prior") {
  Dataset d;
  d.num_classes = 10;
  d.features = Matrix::Constant(3, 100, 0.5);
  for (int i = 0; i < 100; ++i) d.labels.push_back(i % 10);
  DenseNet net = init_dense_net(std::vector<int>{3, 10}, 0);
  net.params.weights[0].setZero();
  net.params.biases[0].setZero();
  net.params.biases[0][1] = 1.0;
  AttackConfig a;
  a.epsilon = 0.3;
  a.steps = 5;
  a.step_size = 0.1;
  Rng rng(0);
  const EvalResult e = evaluate(net, d, a, rng);
  CHECK(e.clean_acc == doctest::Approx(0.1));
  CHECK(e.robust_acc == doctest::Approx(0.1));
}

TEST_CASE("epsilon zero adversarial training is standard training") {
  TrainConfig attacked = blobs_config(Method::kAT, 0.0, 1);
  attacked.attack.steps = 7;
  attacked.attack.step_size = 0.05;
  attacked.attack.restarts = 2;
  attacked.attack.random_start = true;
  TrainConfig plain = attacked;
  plain.attack.steps = 0;
  plain.attack.step_size = 0.0;
  plain.attack.restarts = 1;
  plain.attack.random_start = false;
  const Vector a = run(attacked).final_checkpoint.net.params.flatten();
  const Vector b = run(plain).final_checkpoint.net.params.flatten();
  CHECK(a == b);
}

TEST_CASE("identical config and seed give byte-identical metrics") {
  const TrainConfig c = blobs_config(Method::kBAT, 0.1, 2);
  const std::string first = metrics_csv(run(c).metrics);
  const std::string second = metrics_csv(run(c).metrics);
  CHECK(first == second);
  TrainConfig other = c;
  other.seed = 6;
  CHECK(metrics_csv(run(other).metrics) != first);
}

TEST_CASE("metrics csv layout") {
  MetricsRow r;
  r.epoch = 1;
  r.train_loss = 0.5;
  r.clean_acc = 0.75;
  r.robust_acc = 0.25;
  r.expected_margin_increase = 0.125;
  r.r_nat = 0.25;
  r.r_bdy = 0.5;
  r.r_rob = 0.75;
  const std::vector<MetricsRow> rows{r};
  const std::string csv = metrics_csv(rows);
  CHECK(csv ==
        "epoch,train_loss,clean_acc,robust_acc,mean_margin_clean,mean_margin_adv,mean_smoothness_kl,"
        "expected_margin_increase,normalized_grad_norm,r_nat,r_bdy,r_rob\n"
        "1,0.5,0.75,0.25,0,0,0,0.125,,0.25,0.5,0.75\n");
}

TEST_CASE("diagnostics csv layout") {
  DiagnosticsRecord r;
  r.label = 3;
  r.margin_clean = 0.5;
  r.margin_adv = -0.25;
  r.smoothness_kl = 0.125;
  r.log_alpha_y = 1.0;
  r.log_alpha_t = -2.0;
  r.quadrant = Quadrant::kQ4;
  std::ostringstream out;
  write_diagnostics_csv(out, std::vector<DiagnosticsRecord>{r});
  CHECK(out.str() ==
        "index,label,margin_clean,margin_adv,smoothness_kl,log_alpha_y,log_alpha_t,quadrant\n"
        "0,3,0.5,-0.25,0.125,1,-2,Q4\n");
}

TEST_CASE("every metrics row satisfies the error identity") {
  const TrainResult r = run(blobs_config(Method::kTRADES, 0.1, 3));
  REQUIRE(r.metrics.size() == 3);
  for (const MetricsRow& row : r.metrics) {
    CHECK(row.r_rob == doctest::Approx(row.r_nat + row.r_bdy).epsilon(1e-15));
    CHECK(row.expected_margin_increase.has_value());
    CHECK(row.normalized_grad_norm.has_value());
  }
}

TEST_CASE("dimension mismatch is rejected before training") {
  TrainConfig c = blobs_config(Method::kAT, 0.1, 1);
  const auto [train_set, test_set] = load_data(c.data);
  Dataset wrong = test_set;
  wrong.features = Matrix::Constant(3, wrong.size(), 0.5);
  CHECK_THROWS_AS(train(c, train_set, wrong), DimensionMismatch);
}

TEST_CASE("best checkpoint selection") {
  TrainConfig c = blobs_config(Method::kBAT, 0.1, 3);
  c.diagnostics.select_best = true;
  c.diagnostics.select_examples = 32;
  const TrainResult r = run(c);
  REQUIRE(r.best_checkpoint.has_value());
  CHECK(r.best_checkpoint->epoch >= 1);
  CHECK(r.best_checkpoint->epoch <= 3);
  CHECK(r.best_checkpoint->metrics.contains("selection_robust_acc"));
}

TEST_CASE("bridged training on blobs reaches high clean accuracy") {
  TrainConfig c = blobs_config(Method::kBAT, 0.1, 20);
  c.eval_attack.steps = 20;
  c.eval_attack.step_size = 2.5 * 0.1 / 20;
  const TrainResult r = run(c);
  const double acc = r.metrics.back().clean_acc;
  MESSAGE("final clean accuracy ", acc);
  CHECK(acc >= 0.9);
  // golden value from the reference run
  CHECK(std::abs(acc - 0.99) <= 0.05);
}
