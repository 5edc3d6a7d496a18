#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "evseg/graph.hpp"
#include "evseg/kv_config.hpp"
#include "evseg/ops.hpp"
#include "evseg/tensor.hpp"

namespace evseg {

inline constexpr std::size_t kStages = 3;

struct GtnnConfig {
  std::array<std::size_t, kStages> encoder_dims{32, 64, 128};
  std::array<std::size_t, kStages> down_rates{1, 4, 4};
  std::size_t k = 16;
  std::size_t global_dim = 128;
  std::size_t head_hidden = 64;
  std::uint64_t seed = 1;

  void validate() const;
  KeyValueConfig to_kv() const;
  static GtnnConfig from_kv(const KeyValueConfig& kv);
  static GtnnConfig from_kv(const KeyValueConfig& kv, GtnnConfig base);
  std::size_t head_input() const { return encoder_dims[0] + global_dim; }
};

struct LinearParams {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out
};

struct NormParams {
  Parameter scale;
  Parameter shift;
  ops::NormStats running;
};

/// Vector self-attention block: phi/psi/alpha feature maps, a two-layer
/// position encoding on coordinate offsets, a two-layer attention map, and
/// the pre/post projections of the residual wrapper.
struct PointTransformerParams {
  LinearParams pre, phi, psi, alpha, delta1, delta2, gamma1, gamma2, post;
};

struct TransitionDownParams {
  std::size_t rate = 1;
  LinearParams linear;
  NormParams norm;
};

struct TransitionUpParams {
  LinearParams linear;
  NormParams norm;
  LinearParams project;
};

struct GlobalParams {
  LinearParams fc1, fc2;
};

struct HeadParams {
  LinearParams fc1, fc2;
};

class GtnnModel {
 public:
  explicit GtnnModel(const GtnnConfig& config);

  const GtnnConfig& config() const { return config_; }

  /// Trainable tensors in a fixed order (also the checkpoint order).
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::vector<NormParams*> norms();
  std::vector<const NormParams*> norms() const;
  std::size_t parameter_count() const;

  LinearParams input_linear;
  NormParams input_norm;
  std::array<TransitionDownParams, kStages> down;
  std::array<PointTransformerParams, kStages> encoder;
  std::array<TransitionUpParams, kStages> up;
  std::array<PointTransformerParams, kStages> decoder;
  GlobalParams global;
  HeadParams head;

 private:
  GtnnConfig config_;
};

enum class Mode { training, inference };

/// Per-pass state: the tape, the normalization mode, and the batch statistics
/// observed in training mode (applied to the running averages by the trainer).
struct ForwardContext {
  Tape& tape;
  Mode mode = Mode::inference;
  std::vector<std::pair<const NormParams*, ops::NormStats>> observed_stats;
};

/// Node set of one resolution level with its own directed kNN.
struct StageGraph {
  std::vector<Point3> positions;
  std::vector<std::size_t> neighbors;
  std::size_t k = 0;

  std::size_t size() const { return positions.size(); }
};

/// Coarsening plan: `kept` indexes the finer level; `pool` lists, for each
/// kept node, its `pool_k` nearest finer nodes (itself included).
struct DownLink {
  bool identity = true;
  std::vector<std::size_t> kept;
  std::vector<std::size_t> pool;
  std::size_t pool_k = 0;
};

/// Refinement plan: each fine node reads `per_node` coarse rows with weights.
struct UpLink {
  std::vector<std::size_t> source;
  std::vector<double> weight;
  std::size_t per_node = 0;
};

/// Geometry-only part of a forward pass: depends on positions and config, not
/// on parameters, so it can be built once per graph and reused.
struct GraphPyramid {
  std::array<StageGraph, kStages> stages;
  std::array<DownLink, kStages> down;
  std::array<UpLink, kStages> up;
  StageGraph input;
};

DownLink plan_transition_down(std::span<const Point3> fine, std::size_t rate, std::size_t k);
/// Inverse-squared-distance weights over the (up to) 3 nearest coarse nodes.
/// A fine node that is itself coarse node c (`coarse_in_fine[c] == i`) or
/// coincides with one reads that node with weight 1.
UpLink plan_transition_up(std::span<const Point3> coarse, std::span<const Point3> fine,
                          std::span<const std::size_t> coarse_in_fine = {});
StageGraph make_stage(std::span<const Point3> fine, const DownLink& link, std::size_t k);
GraphPyramid build_pyramid(const EventGraph& graph, const GtnnConfig& config);

Var linear(Tape& tape, const LinearParams& p, Var x);
Var norm(ForwardContext& ctx, const NormParams& p, Var x);

Var point_transformer_layer(Tape& tape, const PointTransformerParams& p, Var features,
                            std::span<const Point3> positions,
                            std::span<const std::size_t> neighbors, std::size_t k);
Var transition_down(ForwardContext& ctx, const TransitionDownParams& p, Var features,
                    const DownLink& link);
Var transition_up(ForwardContext& ctx, const TransitionUpParams& p, Var coarse, Var skip,
                  const UpLink& link);
/// Collapses the deepest level to one node (max over all nodes), applies the
/// global MLP and average pooling. Returns 1 x global_dim.
Var global_aggregate(ForwardContext& ctx, const GlobalParams& p, Var deepest);

struct ForwardOutput {
  Var probabilities;                         // N x 2 (background, foreground)
  std::array<std::size_t, kStages> encoder_sizes{};
  std::array<std::size_t, kStages> decoder_sizes{};
};

ForwardOutput model_forward(ForwardContext& ctx, const GtnnModel& model, const EventGraph& graph,
                            const GraphPyramid& pyramid);

/// Inference-mode forward on a fresh tape.
Tensor predict_probabilities(const GtnnModel& model, const EventGraph& graph);
Tensor predict_probabilities(const GtnnModel& model, const EventGraph& graph,
                             const GraphPyramid& pyramid);

/// argmax per row with ties going to background.
std::vector<int> predicted_labels(const Tensor& probabilities);

/// Rounds every parameter and running statistic to float32 precision.
void quantize_to_float32(GtnnModel& model);

// Checkpoint layout: "GTNN", u32 version, u32 header length, header text
// (config lines then "tensor <name> <rows> <cols>" lines), then float32
// little-endian values in header order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// `extra` entries are stored alongside the model config (keys must not clash).
void save_checkpoint(const GtnnModel& model, const std::string& path, const KeyValueConfig& extra = {});
/// Every config entry of a checkpoint header, model and extra alike.
KeyValueConfig read_checkpoint_config(const std::string& path);
GtnnModel load_checkpoint(const std::string& path);
/// Loads into an existing model; a differently shaped model is a
/// ConfigMismatchError.
void load_checkpoint_into(GtnnModel& model, const std::string& path);

}  // namespace evseg
