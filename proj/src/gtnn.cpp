#include "evseg/gtnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "evseg/error.hpp"

namespace evseg {

void GtnnConfig::validate() const {
  if (down_rates[0] != 1) throw ConfigMismatchError("down_rates[0] must be 1");
  for (std::size_t s = 0; s < kStages; ++s) {
    if (encoder_dims[s] == 0) throw ConfigMismatchError("encoder widths must be positive");
    if (down_rates[s] == 0) throw ConfigMismatchError("down rates must be positive");
  }
  if (k == 0) throw ConfigMismatchError("k must be positive");
  if (global_dim == 0 || head_hidden == 0) throw ConfigMismatchError("head widths must be positive");
}

KeyValueConfig GtnnConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("encoder_dims", join_sizes({encoder_dims.begin(), encoder_dims.end()}));
  kv.set("down_rates", join_sizes({down_rates.begin(), down_rates.end()}));
  kv.set("k", std::to_string(k));
  kv.set("global_dim", std::to_string(global_dim));
  kv.set("head_hidden", std::to_string(head_hidden));
  kv.set("seed", std::to_string(seed));
  kv.set("global_source", "deepest_encoder");
  return kv;
}

GtnnConfig GtnnConfig::from_kv(const KeyValueConfig& kv) { return from_kv(kv, GtnnConfig{}); }

GtnnConfig GtnnConfig::from_kv(const KeyValueConfig& kv, GtnnConfig base) {
  auto take3 = [&](const std::string& key, std::array<std::size_t, kStages>& dst) {
    if (!kv.has(key)) return;
    auto v = parse_size_list(kv.get(key));
    if (v.size() != kStages) throw ConfigMismatchError(key + " needs exactly 3 entries");
    std::copy(v.begin(), v.end(), dst.begin());
  };
  take3("encoder_dims", base.encoder_dims);
  take3("down_rates", base.down_rates);
  base.k = static_cast<std::size_t>(kv.get_int("k", static_cast<long long>(base.k)));
  base.global_dim =
      static_cast<std::size_t>(kv.get_int("global_dim", static_cast<long long>(base.global_dim)));
  base.head_hidden =
      static_cast<std::size_t>(kv.get_int("head_hidden", static_cast<long long>(base.head_hidden)));
  base.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(base.seed)));
  if (kv.get_string("global_source", "deepest_encoder") != "deepest_encoder") {
    throw ConfigMismatchError("only global_source=deepest_encoder is supported");
  }
  base.validate();
  return base;
}

namespace {

LinearParams make_linear(const std::string& name, std::size_t in, std::size_t out,
                         std::mt19937_64& rng) {
  LinearParams p;
  p.weight = {name + ".weight", Tensor::matrix(in, out)};
  p.bias = {name + ".bias", Tensor::matrix(1, out)};
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : p.weight.value.values()) v = dist(rng);
  return p;
}

NormParams make_norm(const std::string& name, std::size_t width) {
  NormParams p;
  p.scale = {name + ".scale", Tensor::matrix(1, width, 1.0)};
  p.shift = {name + ".shift", Tensor::matrix(1, width, 0.0)};
  p.running.mean.assign(width, 0.0);
  p.running.var.assign(width, 1.0);
  return p;
}

PointTransformerParams make_point_transformer(const std::string& name, std::size_t width,
                                              std::mt19937_64& rng) {
  PointTransformerParams p;
  p.pre = make_linear(name + ".pre", width, width, rng);
  p.phi = make_linear(name + ".phi", width, width, rng);
  p.psi = make_linear(name + ".psi", width, width, rng);
  p.alpha = make_linear(name + ".alpha", width, width, rng);
  p.delta1 = make_linear(name + ".delta1", 3, width, rng);
  p.delta2 = make_linear(name + ".delta2", width, width, rng);
  p.gamma1 = make_linear(name + ".gamma1", width, width, rng);
  p.gamma2 = make_linear(name + ".gamma2", width, width, rng);
  p.post = make_linear(name + ".post", width, width, rng);
  return p;
}

void push_linear(std::vector<Parameter*>& out, LinearParams& p) {
  out.push_back(&p.weight);
  out.push_back(&p.bias);
}

void push_norm(std::vector<Parameter*>& out, NormParams& p) {
  out.push_back(&p.scale);
  out.push_back(&p.shift);
}

void push_pt(std::vector<Parameter*>& out, PointTransformerParams& p) {
  for (LinearParams* l : {&p.pre, &p.phi, &p.psi, &p.alpha, &p.delta1, &p.delta2, &p.gamma1,
                          &p.gamma2, &p.post}) {
    push_linear(out, *l);
  }
}

// Width of the features entering encoder stage s (and leaving decoder s).
std::size_t skip_width(const GtnnConfig& c, std::size_t s) {
  return s == 0 ? c.encoder_dims[0] : c.encoder_dims[s - 1];
}

}  // namespace

GtnnModel::GtnnModel(const GtnnConfig& config) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  const auto& d = config_.encoder_dims;
  input_linear = make_linear("input.linear", 3, d[0], rng);
  input_norm = make_norm("input.norm", d[0]);
  for (std::size_t s = 0; s < kStages; ++s) {
    const std::string n = "encoder" + std::to_string(s);
    down[s].rate = config_.down_rates[s];
    down[s].linear = make_linear(n + ".down.linear", skip_width(config_, s), d[s], rng);
    down[s].norm = make_norm(n + ".down.norm", d[s]);
    encoder[s] = make_point_transformer(n + ".attention", d[s], rng);
  }
  for (std::size_t s = kStages; s-- > 0;) {
    const std::string n = "decoder" + std::to_string(s);
    const std::size_t out = skip_width(config_, s);
    up[s].linear = make_linear(n + ".up.linear", d[s], out, rng);
    up[s].norm = make_norm(n + ".up.norm", out);
    up[s].project = make_linear(n + ".up.project", 2 * out, out, rng);
    decoder[s] = make_point_transformer(n + ".attention", out, rng);
  }
  global.fc1 = make_linear("global.fc1", d[kStages - 1], config_.global_dim, rng);
  global.fc2 = make_linear("global.fc2", config_.global_dim, config_.global_dim, rng);
  head.fc1 = make_linear("head.fc1", config_.head_input(), config_.head_hidden, rng);
  head.fc2 = make_linear("head.fc2", config_.head_hidden, 2, rng);
}

std::vector<Parameter*> GtnnModel::parameters() {
  std::vector<Parameter*> out;
  push_linear(out, input_linear);
  push_norm(out, input_norm);
  for (std::size_t s = 0; s < kStages; ++s) {
    push_linear(out, down[s].linear);
    push_norm(out, down[s].norm);
    push_pt(out, encoder[s]);
  }
  for (std::size_t s = kStages; s-- > 0;) {
    push_linear(out, up[s].linear);
    push_norm(out, up[s].norm);
    push_linear(out, up[s].project);
    push_pt(out, decoder[s]);
  }
  push_linear(out, global.fc1);
  push_linear(out, global.fc2);
  push_linear(out, head.fc1);
  push_linear(out, head.fc2);
  return out;
}

std::vector<const Parameter*> GtnnModel::parameters() const {
  auto mutable_params = const_cast<GtnnModel*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

std::vector<NormParams*> GtnnModel::norms() {
  std::vector<NormParams*> out{&input_norm};
  for (std::size_t s = 0; s < kStages; ++s) out.push_back(&down[s].norm);
  for (std::size_t s = kStages; s-- > 0;) out.push_back(&up[s].norm);
  return out;
}

std::vector<const NormParams*> GtnnModel::norms() const {
  auto mutable_norms = const_cast<GtnnModel*>(this)->norms();
  return {mutable_norms.begin(), mutable_norms.end()};
}

std::size_t GtnnModel::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += p->value.size();
  return n;
}

DownLink plan_transition_down(std::span<const Point3> fine, std::size_t rate, std::size_t k) {
  if (rate == 0) throw SizeError("transition down rate must be >= 1");
  DownLink link;
  if (rate == 1) {
    link.identity = true;
    link.kept.resize(fine.size());
    std::iota(link.kept.begin(), link.kept.end(), std::size_t{0});
    return link;
  }
  const std::size_t p2 = (fine.size() + rate - 1) / rate;
  if (p2 < 1) throw SizeError("transition down on an empty graph");
  link.identity = false;
  link.kept = farthest_point_sampling(fine, p2);
  std::vector<Point3> centers;
  centers.reserve(p2);
  for (std::size_t i : link.kept) centers.push_back(fine[i]);
  link.pool_k = std::min(k, fine.size());
  link.pool = nearest_neighbors(fine, centers, link.pool_k);
  return link;
}

StageGraph make_stage(std::span<const Point3> fine, const DownLink& link, std::size_t k) {
  StageGraph st;
  st.k = k;
  st.positions.reserve(link.kept.size());
  for (std::size_t i : link.kept) st.positions.push_back(fine[i]);
  st.neighbors = knn_self(st.positions, k);
  return st;
}

UpLink plan_transition_up(std::span<const Point3> coarse, std::span<const Point3> fine,
                          std::span<const std::size_t> coarse_in_fine) {
  if (coarse.empty()) throw SizeError("transition up from an empty graph");
  UpLink link;
  link.per_node = std::min<std::size_t>(3, coarse.size());
  const std::size_t m = link.per_node;
  link.source = nearest_neighbors(coarse, fine, m);
  link.weight.assign(fine.size() * m, 0.0);

  std::vector<std::size_t> exact(fine.size(), coarse.size());
  for (std::size_t c = 0; c < coarse_in_fine.size(); ++c) exact[coarse_in_fine[c]] = c;

  for (std::size_t i = 0; i < fine.size(); ++i) {
    std::size_t* src = link.source.data() + i * m;
    double* w = link.weight.data() + i * m;
    if (exact[i] < coarse.size()) {
      src[0] = exact[i];
      w[0] = 1.0;
      continue;
    }
    const double d0 = squared_distance(fine[i], coarse[src[0]]);
    if (d0 == 0.0) {
      w[0] = 1.0;
      continue;
    }
    double total = 0.0;
    for (std::size_t q = 0; q < m; ++q) {
      w[q] = 1.0 / squared_distance(fine[i], coarse[src[q]]);
      total += w[q];
    }
    for (std::size_t q = 0; q < m; ++q) w[q] /= total;
  }
  return link;
}

GraphPyramid build_pyramid(const EventGraph& graph, const GtnnConfig& config) {
  config.validate();
  if (graph.k != config.k) {
    throw ConfigMismatchError("graph built with k=" + std::to_string(graph.k) +
                              " but model expects k=" + std::to_string(config.k));
  }
  if (graph.size() <= graph.k) throw SizeError("graph has too few nodes for its k");
  GraphPyramid pyr;
  pyr.input = {graph.positions, graph.neighbors, graph.k};
  for (std::size_t s = 0; s < kStages; ++s) {
    const StageGraph& fine = s == 0 ? pyr.input : pyr.stages[s - 1];
    pyr.down[s] = plan_transition_down(fine.positions, config.down_rates[s], config.k);
    if (pyr.down[s].identity) {
      pyr.stages[s] = fine;
    } else {
      const std::size_t p2 = pyr.down[s].kept.size();
      if (p2 < 2) {
        throw SizeError("graph of " + std::to_string(graph.size()) +
                        " nodes is too small for the down-sampling pyramid (stage " +
                        std::to_string(s) + " would keep " + std::to_string(p2) + " node)");
      }
      pyr.stages[s] = make_stage(fine.positions, pyr.down[s], std::min(config.k, p2 - 1));
    }
    pyr.up[s] = plan_transition_up(pyr.stages[s].positions, fine.positions, pyr.down[s].kept);
  }
  return pyr;
}

Var linear(Tape& tape, const LinearParams& p, Var x) {
  return ops::linear(x, tape.parameter(p.weight), tape.parameter(p.bias));
}

Var norm(ForwardContext& ctx, const NormParams& p, Var x) {
  constexpr double kEps = 1e-5;
  Var scale = ctx.tape.parameter(p.scale);
  Var shift = ctx.tape.parameter(p.shift);
  if (ctx.mode == Mode::inference) return ops::graph_feature_norm(x, scale, shift, kEps, &p.running);
  ops::NormStats observed;
  Var out = ops::graph_feature_norm(x, scale, shift, kEps, nullptr, &observed);
  ctx.observed_stats.emplace_back(&p, std::move(observed));
  return out;
}

Var point_transformer_layer(Tape& tape, const PointTransformerParams& p, Var features,
                            std::span<const Point3> positions,
                            std::span<const std::size_t> neighbors, std::size_t k) {
  const std::size_t n = features.rows();
  if (positions.size() != n || neighbors.size() != n * k || k == 0) {
    throw ShapeError("point_transformer_layer: positions/neighbors do not match " +
                     std::to_string(n) + " nodes with k=" + std::to_string(k));
  }
  if (p.pre.weight.value.rows() != features.cols()) {
    throw ShapeError("point_transformer_layer: parameters expect width " +
                     std::to_string(p.pre.weight.value.rows()) + ", features have " +
                     std::to_string(features.cols()));
  }
  std::vector<std::size_t> center(n * k);
  Tensor offsets = Tensor::matrix(n * k, 3);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t q = 0; q < k; ++q) {
      const std::size_t e = i * k + q;
      const std::size_t j = neighbors[e];
      center[e] = i;
      for (std::size_t c = 0; c < 3; ++c) offsets(e, c) = positions[i][c] - positions[j][c];
    }
  }
  Var h = linear(tape, p.pre, features);
  Var query = linear(tape, p.phi, h);
  Var key = linear(tape, p.psi, h);
  Var value = linear(tape, p.alpha, h);
  Var delta = linear(tape, p.delta2, ops::relu(linear(tape, p.delta1, tape.constant(std::move(offsets)))));

  Var relation = ops::add(
      ops::subtract(ops::gather_rows(query, center), ops::gather_rows(key, neighbors)), delta);
  Var logits = linear(tape, p.gamma2, ops::relu(linear(tape, p.gamma1, relation)));
  Var attention = ops::neighborhood_softmax(logits, k);
  Var message = ops::hadamard(attention, ops::add(ops::gather_rows(value, neighbors), delta));
  Var aggregated = ops::scatter_sum(message, center, n);
  return ops::add(linear(tape, p.post, aggregated), features);
}

Var transition_down(ForwardContext& ctx, const TransitionDownParams& p, Var features,
                    const DownLink& link) {
  Var h = ops::relu(norm(ctx, p.norm, linear(ctx.tape, p.linear, features)));
  if (link.identity) return h;
  return ops::neighborhood_max_pool(h, link.pool, link.pool_k);
}

Var transition_up(ForwardContext& ctx, const TransitionUpParams& p, Var coarse, Var skip,
                  const UpLink& link) {
  const std::size_t fine_n = skip.rows();
  if (link.source.size() != fine_n * link.per_node) {
    throw ShapeError("transition_up: interpolation plan does not match skip features");
  }
  Var h = ops::relu(norm(ctx, p.norm, linear(ctx.tape, p.linear, coarse)));
  const std::size_t width = h.cols();
  Tensor weights = Tensor::matrix(link.source.size(), width);
  std::vector<std::size_t> target(link.source.size());
  for (std::size_t r = 0; r < link.source.size(); ++r) {
    target[r] = r / link.per_node;
    std::fill_n(weights.data() + r * width, width, link.weight[r]);
  }
  Var interpolated = ops::scatter_sum(
      ops::hadamard(ops::gather_rows(h, link.source), ctx.tape.constant(std::move(weights))), target,
      fine_n);
  return linear(ctx.tape, p.project, ops::concat_features(interpolated, skip));
}

Var global_aggregate(ForwardContext& ctx, const GlobalParams& p, Var deepest) {
  const std::size_t n = deepest.rows();
  if (n == 0) throw SizeError("global aggregation of an empty graph");
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  Var single = ops::neighborhood_max_pool(deepest, all, n);
  Var h = ops::relu(linear(ctx.tape, p.fc1, single));
  h = ops::relu(linear(ctx.tape, p.fc2, h));
  return ops::global_avg_pool(h);
}

ForwardOutput model_forward(ForwardContext& ctx, const GtnnModel& model, const EventGraph& graph,
                            const GraphPyramid& pyramid) {
  const GtnnConfig& config = model.config();
  if (graph.k != config.k) throw ConfigMismatchError("graph k differs from model k");
  if (pyramid.input.size() != graph.size()) throw ShapeError("pyramid built for a different graph");
  Tape& tape = ctx.tape;
  ForwardOutput out;

  Var h = ops::relu(
      norm(ctx, model.input_norm, linear(tape, model.input_linear, tape.constant(graph.features))));
  std::array<Var, kStages> skips;
  for (std::size_t s = 0; s < kStages; ++s) {
    skips[s] = h;
    h = transition_down(ctx, model.down[s], h, pyramid.down[s]);
    const StageGraph& st = pyramid.stages[s];
    h = point_transformer_layer(tape, model.encoder[s], h, st.positions, st.neighbors, st.k);
    out.encoder_sizes[s] = h.rows();
  }
  Var global = global_aggregate(ctx, model.global, h);
  for (std::size_t s = kStages; s-- > 0;) {
    h = transition_up(ctx, model.up[s], h, skips[s], pyramid.up[s]);
    const StageGraph& level = s == 0 ? pyramid.input : pyramid.stages[s - 1];
    h = point_transformer_layer(tape, model.decoder[s], h, level.positions, level.neighbors,
                                level.k);
    out.decoder_sizes[kStages - 1 - s] = h.rows();
  }
  const std::vector<std::size_t> broadcast(graph.size(), 0);
  Var z = ops::concat_features(h, ops::gather_rows(global, broadcast));
  // No feature norm here: per-graph statistics would subtract the broadcast
  // global vector, which is constant over the nodes, and erase it.
  Var hidden = ops::relu(linear(tape, model.head.fc1, z));
  out.probabilities = ops::softmax_rows(linear(tape, model.head.fc2, hidden));
  return out;
}

Tensor predict_probabilities(const GtnnModel& model, const EventGraph& graph,
                             const GraphPyramid& pyramid) {
  Tape tape;
  ForwardContext ctx{tape, Mode::inference, {}};
  return model_forward(ctx, model, graph, pyramid).probabilities.value();
}

Tensor predict_probabilities(const GtnnModel& model, const EventGraph& graph) {
  return predict_probabilities(model, graph, build_pyramid(graph, model.config()));
}

std::vector<int> predicted_labels(const Tensor& probabilities) {
  std::vector<int> labels(probabilities.rows());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = probabilities(i, 1) > probabilities(i, 0) ? 1 : 0;
  }
  return labels;
}

void quantize_to_float32(GtnnModel& model) {
  auto q = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  for (Parameter* p : model.parameters()) {
    for (double& v : p->value.values()) v = q(v);
  }
  for (NormParams* n : model.norms()) {
    for (double& v : n->running.mean) v = q(v);
    for (double& v : n->running.var) v = q(v);
  }
}

}  // namespace evseg
