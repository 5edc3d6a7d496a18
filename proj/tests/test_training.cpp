#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "doctest.h"
#include "evseg/error.hpp"
#include "evseg/training.hpp"
#include "model_fixtures.hpp"

using namespace evseg;
using namespace evseg::testing;

namespace {

double loss_of(const Tensor& probs, const std::vector<int>& labels, const LossConfig& cfg) {
  Tape tape;
  return compute_loss(tape.constant(probs), labels, cfg).value()[0];
}

// Direct per-event formula, written independently of the library.
double reference_loss(const Tensor& probs, const std::vector<int>& labels, const LossConfig& cfg) {
  double total = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    const double w = cfg.class_weights[y];
    const double p = std::max(probs(i, y), 1e-12);
    const double q = probs(i, 1 - y);
    double l = 0;
    if (cfg.kind == LossKind::cross_entropy) l = -w * std::log(p);
    else l = -w * std::pow(1 - p, cfg.gamma) * std::log(p);
    if (cfg.kind == LossKind::dual_focal) l += -w * std::pow(q, cfg.gamma) * std::log(std::max(1 - q, 1e-12));
    total += l;
  }
  return total / static_cast<double>(labels.size());
}

Tensor random_probs(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.02, 0.98);
  Tensor p = Tensor::matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    p(i, 1) = u(rng);
    p(i, 0) = 1 - p(i, 1);
  }
  return p;
}

}  // namespace

TEST_CASE("loss examples") {
  const std::vector<int> one{1};
  for (LossKind kind : {LossKind::cross_entropy, LossKind::focal, LossKind::dual_focal}) {
    LossConfig cfg;
    cfg.kind = kind;
    CHECK(loss_of(Tensor::from_rows(1, 2, {0, 1}), one, cfg) == 0.0);
  }
  LossConfig ce;
  ce.kind = LossKind::cross_entropy;
  CHECK(loss_of(Tensor::from_rows(1, 2, {0.5, 0.5}), one, ce) == doctest::Approx(0.6931471805599453).epsilon(1e-15));

  std::mt19937_64 rng(1);
  const Tensor p = random_probs(rng, 30);
  std::vector<int> labels(30);
  for (auto& y : labels) y = static_cast<int>(rng() % 2);
  LossConfig focal0;
  focal0.kind = LossKind::focal;
  focal0.gamma = 0.0;
  CHECK(loss_of(p, labels, focal0) == loss_of(p, labels, ce));

  // Zero probability on the true class is clamped, not an error.
  CHECK(loss_of(Tensor::from_rows(1, 2, {1, 0}), one, ce) == doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("loss values agree with the direct formula") {
  std::mt19937_64 rng(2);
  for (LossKind kind : {LossKind::cross_entropy, LossKind::focal, LossKind::dual_focal}) {
    for (double gamma : {0.0, 0.5, 2.0, 3.0}) {
      LossConfig cfg{kind, gamma, {0.7, 2.5}};
      const Tensor p = random_probs(rng, 25);
      std::vector<int> labels(25);
      for (auto& y : labels) y = static_cast<int>(rng() % 2);
      CHECK(loss_of(p, labels, cfg) == doctest::Approx(reference_loss(p, labels, cfg)).epsilon(1e-13));
    }
  }
}

TEST_CASE("loss gradients match finite differences") {
  std::mt19937_64 rng(3);
  for (LossKind kind : {LossKind::cross_entropy, LossKind::focal, LossKind::dual_focal}) {
    LossConfig cfg{kind, 2.0, {0.8, 1.7}};
    std::vector<int> labels(6);
    for (auto& y : labels) y = static_cast<int>(rng() % 2);
    // Softmax in front keeps perturbed rows on the simplex.
    const auto r = check_op(to_string(kind), {random_tensor(6, 2, rng, -2, 2)},
                            [&](Tape&, const std::vector<Var>& v) {
                              return compute_loss(ops::softmax_rows(v[0]), labels, cfg);
                            });
    INFO(r.worst);
    CHECK(r.max_rel_error < 1e-5);
  }
}

TEST_CASE("loss rejects bad inputs") {
  Tape tape;
  Var p = tape.constant(Tensor::from_rows(2, 2, {0.5, 0.5, 0.3, 0.7}));
  CHECK_THROWS_AS(compute_loss(p, std::vector<int>{1}, LossConfig{}), ShapeError);
  CHECK_THROWS_AS(compute_loss(p, std::vector<int>{1, 2}, LossConfig{}), Error);
  CHECK(parse_loss_kind("dfl") == LossKind::dual_focal);
  CHECK_THROWS_AS(parse_loss_kind("hinge"), Error);
}

TEST_CASE("inverse frequency weights") {
  const std::vector<std::vector<int>> sets{{0, 0, 0, 1}, {0, 0, 0, 0, 1, 1}};
  const auto w = inverse_frequency_weights(sets);
  CHECK(w[0] == doctest::Approx(10.0 / 14.0));
  CHECK(w[1] == doctest::Approx(10.0 / 6.0));
}

TEST_CASE("schedule partitions the samples") {
  const auto s = make_schedule(10, 5, 42);
  REQUIRE(s.size() == 5);
  std::vector<int> seen(10, 0);
  for (const auto& sub : s) {
    CHECK(sub.size() == 2);
    for (std::size_t i : sub) ++seen[i];
  }
  for (int c : seen) CHECK(c == 1);
  CHECK(make_schedule(10, 5, 42) == s);
  CHECK(make_schedule(7, 1, 0).front().size() == 7);
  CHECK_THROWS_AS(make_schedule(3, 4, 0), ScheduleError);
  CHECK_THROWS_AS(make_schedule(3, 0, 0), ScheduleError);
  CHECK(subset_for_epoch(7, 5) == 2);

  for (std::size_t n = 1; n < 40; ++n) {
    for (std::size_t l = 1; l <= n; l += 3) {
      std::size_t total = 0;
      for (const auto& sub : make_schedule(n, l, n)) {
        CHECK(sub.size() >= n / l);
        CHECK(sub.size() <= (n + l - 1) / l);
        total += sub.size();
      }
      CHECK(total == n);
    }
  }
}

namespace {

// Nodes right of x = 32 are foreground: learnable from position alone.
std::vector<Sample> toy_dataset(std::size_t count, const GtnnConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Sample> out;
  for (std::size_t s = 0; s < count; ++s) {
    EventGraph g = random_graph(rng, 32, config.k);
    std::vector<int> labels(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) labels[i] = g.positions[i][0] > 32.0 ? 1 : 0;
    out.push_back(make_sample(std::move(g), std::move(labels), config));
  }
  return out;
}

}  // namespace

TEST_CASE("epochs cycle through subsets") {
  const GtnnConfig cfg = tiny_config(4, 2);
  const auto data = toy_dataset(12, cfg, 5);
  GtnnModel model(cfg);
  TrainOptions opt;
  opt.schedule = {5, 10, 8, 3};
  const TrainHistory h = train(model, data, opt);
  REQUIRE(h.epochs.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(h.epochs[i].subset == i % 5);
    CHECK((h.epochs[i].samples == 2 || h.epochs[i].samples == 3));
  }
  std::ostringstream csv;
  h.write_csv(csv);
  CHECK(csv.str().rfind("epoch,subset,loss,seconds\n", 0) == 0);
}

TEST_CASE("training is reproducible and parallel batches agree") {
  const GtnnConfig cfg = tiny_config(4, 2);
  const auto data = toy_dataset(6, cfg, 6);
  TrainOptions opt;
  opt.schedule = {2, 4, 3, 9};
  GtnnModel a(cfg), b(cfg), c(cfg);
  const auto ha = train(a, data, opt);
  const auto hb = train(b, data, opt);
  opt.threads = 3;
  const auto hc = train(c, data, opt);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(ha.epochs[i].loss == hb.epochs[i].loss);
    CHECK(ha.epochs[i].checksum == hb.epochs[i].checksum);
    CHECK(ha.epochs[i].checksum == hc.epochs[i].checksum);
  }
}

TEST_CASE("a tiny model overfits four graphs") {
  const GtnnConfig cfg = tiny_config(4, 4);
  const auto data = toy_dataset(4, cfg, 7);
  GtnnModel model(cfg);
  TrainOptions opt;
  opt.schedule = {1, 200, 8, 1};
  opt.adam.lr = 0.01;
  const TrainHistory h = train(model, data, opt);
  CHECK(h.epochs[99].loss < h.epochs[0].loss);
  INFO("final training loss " << h.epochs.back().loss);
  CHECK(h.epochs.back().loss < 0.05);
}
