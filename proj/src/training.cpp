#include "evseg/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "evseg/error.hpp"
#include "evseg/parallel.hpp"

namespace evseg {
namespace {

constexpr double kProbFloor = 1e-12;

// Loss of one event and its derivatives with respect to the probability of
// the true class (p) and of the other class (q).
struct EventLoss {
  double value = 0.0;
  double d_true = 0.0;
  double d_other = 0.0;
};

EventLoss event_loss(double p_raw, double q_raw, double w, const LossConfig& cfg) {
  EventLoss out;
  const double p = std::clamp(p_raw, kProbFloor, 1.0);
  const bool p_clamped = p_raw < kProbFloor || p_raw > 1.0;
  const double g = cfg.gamma;
  const double logp = std::log(p);
  switch (cfg.kind) {
    case LossKind::cross_entropy:
      out.value = -w * logp;
      out.d_true = p_clamped ? 0.0 : -w / p;
      return out;
    case LossKind::focal:
    case LossKind::dual_focal: {
      const double one_minus = 1.0 - p;
      const double mod = std::pow(one_minus, g);
      out.value = -w * mod * logp;
      if (!p_clamped) {
        const double dmod = g == 0.0 || one_minus == 0.0 ? 0.0 : g * std::pow(one_minus, g - 1.0);
        out.d_true = w * (dmod * logp - mod / p);
      }
      if (cfg.kind == LossKind::dual_focal) {
        // Penalise confidence in the wrong class with the mirrored focal term.
        const double rest = std::clamp(1.0 - q_raw, kProbFloor, 1.0);
        const bool rest_clamped = 1.0 - q_raw < kProbFloor || 1.0 - q_raw > 1.0;
        const double q = std::max(q_raw, 0.0);
        const double qmod = std::pow(q, g);
        const double log_rest = std::log(rest);
        out.value += -w * qmod * log_rest;
        const double dq = g == 0.0 || q == 0.0 ? 0.0 : g * std::pow(q, g - 1.0);
        out.d_other = -w * dq * log_rest + (rest_clamped ? 0.0 : w * qmod / rest);
      }
      return out;
    }
  }
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

LossKind parse_loss_kind(const std::string& name) {
  if (name == "ce" || name == "cross_entropy") return LossKind::cross_entropy;
  if (name == "focal" || name == "fl") return LossKind::focal;
  if (name == "dual_focal" || name == "dfl") return LossKind::dual_focal;
  throw Error("unknown loss '" + name + "' (expected ce, focal or dual_focal)");
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::cross_entropy: return "ce";
    case LossKind::focal: return "focal";
    case LossKind::dual_focal: return "dual_focal";
  }
  return "?";
}

Var compute_loss(Var probabilities, std::span<const int> labels, const LossConfig& config) {
  const Tensor& probs = probabilities.value();
  const std::size_t n = probs.rows();
  if (probs.cols() != 2) throw ShapeError("loss expects N x 2 probabilities, got " + probs.shape_string());
  if (labels.size() != n) {
    throw ShapeError("loss: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
  }
  if (n == 0) throw SizeError("loss over an empty set of events");

  Tensor grad = Tensor::matrix(n, 2);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y != 0 && y != 1) throw Error("label must be 0 or 1, got " + std::to_string(y));
    const std::size_t other = 1 - static_cast<std::size_t>(y);
    const EventLoss l = event_loss(probs(i, y), probs(i, other), config.class_weights[y], config);
    total += l.value;
    grad(i, y) = l.d_true / static_cast<double>(n);
    grad(i, other) = l.d_other / static_cast<double>(n);
  }
  return probabilities.tape->record(
      Tensor::scalar(total / static_cast<double>(n)), {probabilities},
      [in = probabilities.id, grad = std::move(grad)](Tape& tape, const Tensor& out_grad) {
        Tensor& g = tape.grad_buffer(in);
        const double s = out_grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * grad[i];
      });
}

std::array<double, 2> inverse_frequency_weights(std::span<const std::vector<int>> label_sets) {
  std::array<std::size_t, 2> counts{0, 0};
  for (const auto& set : label_sets) {
    for (int y : set) ++counts[y == 1 ? 1 : 0];
  }
  const double total = static_cast<double>(counts[0] + counts[1]);
  std::array<double, 2> w{0.0, 0.0};
  for (int c = 0; c < 2; ++c) {
    if (counts[c] > 0) w[c] = total / (2.0 * static_cast<double>(counts[c]));
  }
  return w;
}

Sample make_sample(EventGraph graph, std::vector<int> labels, const GtnnConfig& config) {
  if (labels.size() != graph.size()) {
    throw ShapeError("sample has " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(graph.size()) + " nodes");
  }
  GraphPyramid pyramid = build_pyramid(graph, config);
  return Sample{std::move(graph), std::move(labels), std::move(pyramid)};
}

std::vector<std::vector<std::size_t>> make_schedule(std::size_t count, std::size_t subsets,
                                                    std::uint64_t seed) {
  if (subsets == 0) throw ScheduleError("number of subsets must be at least 1");
  if (subsets > count) {
    throw ScheduleError("cannot split " + std::to_string(count) + " samples into " +
                        std::to_string(subsets) + " non-empty subsets");
  }
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::vector<std::size_t>> out(subsets);
  const std::size_t base = count / subsets;
  const std::size_t extra = count % subsets;
  std::size_t pos = 0;
  for (std::size_t j = 0; j < subsets; ++j) {
    const std::size_t len = base + (j < extra ? 1 : 0);
    out[j].assign(order.begin() + pos, order.begin() + pos + len);
    pos += len;
  }
  return out;
}

void TrainHistory::write_csv(std::ostream& out) const {
  out << "epoch,subset,loss,seconds\n";
  for (const auto& e : epochs) out << e.epoch << ',' << e.subset << ',' << e.loss << ',' << e.seconds << '\n';
}

double parameter_checksum(const GtnnModel& model) {
  double sum = 0.0;
  for (const Parameter* p : model.parameters()) {
    for (double v : p->value.values()) sum += v;
  }
  return sum;
}

TrainHistory train(GtnnModel& model, std::span<const Sample> dataset, const TrainOptions& options) {
  const auto& sched = options.schedule;
  if (sched.batch_size == 0) throw ScheduleError("batch size must be at least 1");
  const auto subsets = make_schedule(dataset.size(), sched.subsets, sched.seed);

  std::vector<Parameter*> params = model.parameters();
  AdamState adam = make_adam_state(params, options.adam);
  TrainHistory history;

  struct PassResult {
    double loss = 0.0;
    std::vector<Tensor> grads;
    std::vector<std::pair<const NormParams*, ops::NormStats>> stats;
  };

  for (std::size_t epoch = 0; epoch < sched.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t subset = subset_for_epoch(epoch, subsets.size());
    std::vector<std::size_t> order = subsets[subset];
    std::mt19937_64 rng(mix_seed(sched.seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < order.size(); b += sched.batch_size) {
      const std::size_t end = std::min(order.size(), b + sched.batch_size);
      std::vector<PassResult> results(end - b);
      parallel_for(results.size(), options.threads, [&](std::size_t j) {
        const std::size_t idx = order[b + j];
        const Sample& s = dataset[idx];
        Tape tape;
        ForwardContext ctx{tape, Mode::training, {}};
        try {
          ForwardOutput fwd = model_forward(ctx, model, s.graph, s.pyramid);
          Var loss = compute_loss(fwd.probabilities, s.labels, options.loss);
          tape.backward(loss);
          PassResult& r = results[j];
          r.loss = loss.value()[0];
          r.grads.reserve(params.size());
          for (const Parameter* p : params) r.grads.push_back(tape.grad(*p));
          r.stats = std::move(ctx.observed_stats);
        } catch (const NonFiniteError& e) {
          throw NonFiniteError("epoch " + std::to_string(epoch) + ", sample " + std::to_string(idx) +
                               ": " + e.what());
        }
      });

      std::vector<Tensor> grads = std::move(results[0].grads);
      for (std::size_t j = 1; j < results.size(); ++j) {
        for (std::size_t p = 0; p < grads.size(); ++p) {
          auto dst = grads[p].values();
          auto src = results[j].grads[p].values();
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
      }
      const double inv = 1.0 / static_cast<double>(results.size());
      for (Tensor& g : grads) {
        for (double& v : g.values()) v *= inv;
      }
      adam_step(params, grads, adam);

      const double m = options.norm_momentum;
      for (PassResult& r : results) {
        epoch_loss += r.loss;
        for (auto& [norm_ptr, stats] : r.stats) {
          // Pointers come from `model`, which is mutable here.
          auto& running = const_cast<NormParams*>(norm_ptr)->running;
          for (std::size_t c = 0; c < running.mean.size(); ++c) {
            running.mean[c] = (1.0 - m) * running.mean[c] + m * stats.mean[c];
            running.var[c] = (1.0 - m) * running.var[c] + m * stats.var[c];
          }
        }
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.subset = subset;
    rec.samples = order.size();
    rec.loss = order.empty() ? 0.0 : epoch_loss / static_cast<double>(order.size());
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rec.checksum = parameter_checksum(model);
    if (!std::isfinite(rec.loss)) {
      throw NonFiniteError("epoch " + std::to_string(epoch) + ": non-finite mean loss");
    }
    history.epochs.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
  }
  return history;
}

double evaluate_loss(const GtnnModel& model, std::span<const Sample> dataset, const LossConfig& config) {
  if (dataset.empty()) return 0.0;
  double total = 0.0;
  for (const Sample& s : dataset) {
    Tape tape;
    ForwardContext ctx{tape, Mode::inference, {}};
    ForwardOutput fwd = model_forward(ctx, model, s.graph, s.pyramid);
    total += compute_loss(fwd.probabilities, s.labels, config).value()[0];
  }
  return total / static_cast<double>(dataset.size());
}

}  // namespace evseg
