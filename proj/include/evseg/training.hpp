#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "evseg/adam.hpp"
#include "evseg/gtnn.hpp"

namespace evseg {

enum class LossKind { cross_entropy, focal, dual_focal };

LossKind parse_loss_kind(const std::string& name);
std::string to_string(LossKind kind);

struct LossConfig {
  LossKind kind = LossKind::focal;
  double gamma = 2.0;
  std::array<double, 2> class_weights{1.0, 1.0};  // background, foreground
};

/// Mean per-event loss over an N x 2 probability matrix. Probabilities are
/// clamped to [1e-12, 1] before taking logarithms.
Var compute_loss(Var probabilities, std::span<const int> labels, const LossConfig& config);

/// w_c = total / (2 * count_c); a class with no samples gets weight 0.
std::array<double, 2> inverse_frequency_weights(std::span<const std::vector<int>> label_sets);

/// One training example with its geometry precomputed for the model config.
struct Sample {
  EventGraph graph;
  std::vector<int> labels;
  GraphPyramid pyramid;
};

Sample make_sample(EventGraph graph, std::vector<int> labels, const GtnnConfig& config);

struct TrainingSchedule {
  std::size_t subsets = 5;
  std::size_t epochs = 1;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
};

/// Deterministic shuffled partition of sample indices 0..count-1 into
/// `subsets` parts whose sizes differ by at most one.
std::vector<std::vector<std::size_t>> make_schedule(std::size_t count, std::size_t subsets,
                                                    std::uint64_t seed);

inline std::size_t subset_for_epoch(std::size_t epoch, std::size_t subsets) { return epoch % subsets; }

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t subset = 0;
  std::size_t samples = 0;
  double loss = 0.0;
  double seconds = 0.0;
  double checksum = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  /// "epoch,subset,loss,seconds"
  void write_csv(std::ostream& out) const;
};

struct TrainOptions {
  TrainingSchedule schedule;
  LossConfig loss;
  AdamConfig adam;
  double norm_momentum = 0.1;
  std::size_t threads = 1;
  std::function<void(const EpochRecord&)> on_epoch;
};

double parameter_checksum(const GtnnModel& model);

/// Subset-cycling mini-batch training: epoch i visits only subset i mod L,
/// shuffled per epoch; gradients are averaged over each mini-batch and
/// followed by one Adam step.
TrainHistory train(GtnnModel& model, std::span<const Sample> dataset, const TrainOptions& options);

/// Mean loss over `dataset` in inference mode.
double evaluate_loss(const GtnnModel& model, std::span<const Sample> dataset,
                     const LossConfig& config);

}  // namespace evseg
