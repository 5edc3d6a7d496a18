#include "evseg/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "evseg/domel.hpp"
#include "evseg/error.hpp"
#include "evseg/parallel.hpp"
#include "evseg/pipeline.hpp"
#include "evseg/synth.hpp"
#include "evseg/training.hpp"

namespace evseg {
namespace {

namespace fs = std::filesystem;

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw IoError("no such file or directory: " + path);
}

Micros window_micros(double ms) {
  if (!(ms > 0.0)) throw Error("window length must be positive");
  return static_cast<Micros>(std::llround(ms * 1000.0));
}

std::optional<double> parse_time_scale(const std::string& text) {
  if (text == "AUTO" || text == "auto") return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size() && v > 0.0) return v;
  } catch (const std::exception&) {
  }
  throw Error("--time-scale must be AUTO or a positive number, got '" + text + "'");
}

void print_config(std::ostream& out, const CLI::App& cmd) {
  out << "# " << cmd.get_name() << " configuration\n" << cmd.config_to_str(true, false);
}

// ---------------------------------------------------------------- synth
struct SynthArgs {
  std::string out;
  std::uint64_t seed = 1;
  std::size_t objects = 1;
  std::size_t sequences = 1;
  int width = 128, height = 96;
  double duration_ms = 100.0;
  double frame_ms = 10.0;
  double contrast = 0.2;
  double noise_rate = 0.0;
};

void run_synth(const SynthArgs& a, std::ostream& out) {
  for (std::size_t s = 0; s < a.sequences; ++s) {
    const std::uint64_t seed = a.seed + s;
    SceneConfig scene = random_scene(seed, a.objects, {a.width, a.height}, window_micros(a.duration_ms));
    scene.frame_interval = window_micros(a.frame_ms);
    scene.contrast_threshold = a.contrast;
    scene.noise_rate = a.noise_rate;
    const SynthOutput gen = generate(scene, seed);
    fs::path dir = a.out;
    if (a.sequences > 1) {
      std::ostringstream name;
      name << "seq_" << std::setw(3) << std::setfill('0') << s;
      dir /= name.str();
    }
    write_sequence(dir, gen);
    const auto fg = std::count_if(gen.labels.begin(), gen.labels.end(), [](const EventLabel& l) { return l.label == 1; });
    out << dir.string() << ": " << gen.events.size() << " events, " << fg << " foreground, "
        << gen.frames.size() << " frames\n";
  }
}

// ---------------------------------------------------------------- graph
struct GraphArgs {
  std::string in, out, time_scale = "AUTO";
  double window_ms = 10.0;
  std::size_t k = 16, nmax = 5000;
  std::optional<int> width, height;
};

void run_graph(const GraphArgs& a, std::ostream& out) {
  require_file(a.in);
  const SensorGeometry geometry = resolve_geometry(a.in, a.width, a.height);
  const auto events = read_events_file(a.in, geometry);
  WindowingConfig wc;
  wc.window = window_micros(a.window_ms);
  wc.n_max = a.nmax;
  wc.k = a.k;
  wc.time_scale = parse_time_scale(a.time_scale);
  const MetricConfig metric = wc.metric(geometry);
  out << "geometry=" << geometry.width << "x" << geometry.height << " time_scale=" << metric.time_scale << '\n';

  std::ofstream edges;
  if (!a.out.empty()) {
    edges.open(a.out);
    if (!edges) throw IoError("cannot write " + a.out);
  }
  const auto windows = slice_windows(events, wc.window, wc.n_max);
  std::size_t built = 0;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto& win = windows[w];
    if (win.events.size() <= wc.k) {
      out << "window " << w << ": " << win.events.size() << " events, too few for k=" << wc.k << '\n';
      continue;
    }
    const EventGraph g = build_knn_graph(win, wc.k, metric, geometry);
    ++built;
    out << "window " << w << ": " << g.size() << " nodes, " << g.size() * g.k << " edges\n";
    if (edges.is_open()) {
      edges << "# window " << w << " nodes " << g.size() << '\n';
      write_edge_list(edges, g);
    }
  }
  out << built << " graphs built from " << events.size() << " events\n";
}

// ---------------------------------------------------------------- train
struct TrainArgs {
  std::string data, ckpt, history, time_scale = "AUTO", loss = "focal", class_weights = "auto";
  std::size_t subsets = 5, epochs = 10, batch = 8, k = 16, nmax = 5000, global_dim = 128, head_hidden = 64;
  double lr = 0.001, gamma = 2.0, window_ms = 10.0;
  std::uint64_t seed = 1;
  std::string dims = "32,64,128";
  std::optional<std::size_t> threads;
  std::optional<int> width, height;
};

std::vector<fs::path> sequence_dirs(const fs::path& root) {
  require_file(root.string());
  if (fs::exists(root / "events.txt")) return {root};
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::exists(e.path() / "events.txt") && fs::exists(e.path() / "labels.txt")) {
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw IoError("no sequences (events.txt + labels.txt) under " + root.string());
  return out;
}

void run_train(const TrainArgs& a, std::ostream& out) {
  GtnnConfig mc;
  const auto dims = parse_size_list(a.dims);
  if (dims.size() != kStages) throw ConfigMismatchError("--dims needs exactly 3 widths");
  std::copy(dims.begin(), dims.end(), mc.encoder_dims.begin());
  mc.k = a.k;
  mc.global_dim = a.global_dim;
  mc.head_hidden = a.head_hidden;
  mc.seed = a.seed;
  mc.validate();

  WindowingConfig wc;
  wc.window = window_micros(a.window_ms);
  wc.n_max = a.nmax;
  wc.k = a.k;
  wc.time_scale = parse_time_scale(a.time_scale);
  const std::size_t threads = resolve_threads(a.threads);

  std::vector<Sample> dataset;
  std::vector<std::vector<int>> label_sets;
  for (const auto& dir : sequence_dirs(a.data)) {
    const std::string ev = (dir / "events.txt").string();
    const SensorGeometry geometry = resolve_geometry(ev, a.width, a.height);
    const auto events = read_events_file(ev, geometry);
    const auto labels = read_labels_file((dir / "labels.txt").string());
    for (auto& s : build_samples(events, labels, geometry, wc, mc, threads)) {
      label_sets.push_back(s.labels);
      dataset.push_back(std::move(s));
    }
  }
  out << "samples=" << dataset.size() << '\n';

  TrainOptions opt;
  opt.schedule = {a.subsets, a.epochs, a.batch, a.seed};
  opt.loss.kind = parse_loss_kind(a.loss);
  opt.loss.gamma = a.gamma;
  if (a.class_weights == "auto") {
    opt.loss.class_weights = inverse_frequency_weights(label_sets);
  } else {
    std::istringstream ws(a.class_weights);
    char comma = 0;
    if (!(ws >> opt.loss.class_weights[0] >> comma >> opt.loss.class_weights[1]) || comma != ',') {
      throw Error("--class-weights must be 'auto' or 'w_background,w_foreground'");
    }
  }
  if (opt.loss.class_weights[0] <= 0.0 && opt.loss.class_weights[1] <= 0.0) {
    throw Error("class weights must not both be zero");
  }
  opt.adam.lr = a.lr;
  opt.threads = threads;
  opt.on_epoch = [&](const EpochRecord& r) {
    out << "epoch " << r.epoch << " subset " << r.subset << " samples " << r.samples << " loss " << r.loss
        << " (" << r.seconds << " s)\n";
  };
  out << "class_weights=" << opt.loss.class_weights[0] << ',' << opt.loss.class_weights[1] << '\n';

  GtnnModel model(mc);
  const TrainHistory history = train(model, dataset, opt);
  save_checkpoint(model, a.ckpt, wc.to_kv());
  out << "checkpoint written to " << a.ckpt << '\n';
  if (!a.history.empty()) {
    std::ofstream h(a.history);
    if (!h) throw IoError("cannot write " + a.history);
    history.write_csv(h);
  }
}

// ---------------------------------------------------------------- predict
struct PredictArgs {
  std::string ckpt, in, out, time_scale;
  std::optional<double> window_ms;
  std::optional<std::size_t> nmax, threads;
  std::optional<int> width, height;
};

void run_predict(const PredictArgs& a, std::ostream& out) {
  require_file(a.ckpt);
  require_file(a.in);
  const GtnnModel model = load_checkpoint(a.ckpt);
  WindowingConfig wc = WindowingConfig::from_kv(read_checkpoint_config(a.ckpt));
  wc.k = model.config().k;
  if (a.window_ms) wc.window = window_micros(*a.window_ms);
  if (a.nmax) wc.n_max = *a.nmax;
  if (!a.time_scale.empty()) wc.time_scale = parse_time_scale(a.time_scale);
  const KeyValueConfig resolved = wc.to_kv();
  for (const auto& [k, v] : resolved.entries()) out << k << '=' << v << '\n';

  const SensorGeometry geometry = resolve_geometry(a.in, a.width, a.height);
  const auto events = read_events_file(a.in, geometry);
  const auto labels = predict_stream(model, events, geometry, wc, resolve_threads(a.threads));
  write_labels_file(a.out, labels);
  const auto fg = std::count_if(labels.begin(), labels.end(), [](const EventLabel& l) { return l.label == 1; });
  out << events.size() << " events labeled, " << fg << " foreground\n";
}

// ---------------------------------------------------------------- eval
struct EvalArgs {
  std::string pred, gt, events, report, metrics = "f1,iou,dr";
  double window_ms = 10.0;
  std::size_t nmax = 5000;
  std::optional<int> width, height;
};

void run_eval(const EvalArgs& a, std::ostream& out) {
  require_file(a.pred);
  require_file(a.gt);
  std::string ev = a.events;
  if (ev.empty()) ev = (fs::path(a.gt).parent_path() / "events.txt").string();
  require_file(ev);

  std::vector<std::string> wanted;
  std::stringstream ms(a.metrics);
  for (std::string m; std::getline(ms, m, ',');) {
    if (m != "f1" && m != "iou" && m != "dr") throw CLI::ValidationError("--metrics", "unknown metric '" + m + "'");
    wanted.push_back(m);
  }
  auto want = [&](const char* m) { return std::find(wanted.begin(), wanted.end(), m) != wanted.end(); };

  const SensorGeometry geometry = resolve_geometry(ev, a.width, a.height);
  const auto events = read_events_file(ev, geometry);
  const auto pred = read_labels_file(a.pred);
  const auto gt = read_labels_file(a.gt);
  const EvaluationReport report = evaluate_stream(events, pred, gt, geometry, window_micros(a.window_ms), a.nmax);

  if (want("f1")) {
    const Scores s = report.event_scores();
    out << "recall=" << s.recall << " precision=" << s.precision << " f1=" << s.f1 << '\n';
  }
  if (want("iou")) out << "mean_iou=" << report.mean_iou() << " windows=" << report.windows.size() << '\n';
  if (want("dr")) {
    out << "detection_rate=" << report.detection_rate() << " (" << report.detection_successes() << '/'
        << report.detection_truths() << ")\n";
  }
  if (!a.report.empty()) {
    std::ofstream r(a.report);
    if (!r) throw IoError("cannot write " + a.report);
    report.write_csv(r);
  }
}

// ---------------------------------------------------------------- label
struct LabelArgs {
  std::string events, frames, masks, out, overlays;
  std::optional<std::size_t> threads;
  std::optional<int> width, height;
};

void dump_overlays(const fs::path& dir, const std::vector<Event>& events, const std::vector<EventLabel>& labels,
                   const std::vector<ApsFrame>& frames) {
  fs::create_directories(dir);
  std::vector<Micros> times;
  for (const auto& f : frames) times.push_back(f.timestamp);
  for (const auto& group : synchronize(events, times)) {
    GrayImage img = frames[group.frame].image;
    for (auto& v : img.pixels) v = static_cast<std::uint8_t>(64 + v / 4);
    for (std::size_t i : group.events) {
      if (img.contains(events[i].x, events[i].y)) img.at(events[i].x, events[i].y) = labels[i].label == 1 ? 255 : 0;
    }
    write_pgm(dir / (std::to_string(frames[group.frame].timestamp) + ".pgm"), img);
  }
}

void run_label(const LabelArgs& a, std::ostream& out) {
  require_file(a.events);
  require_file(a.frames);
  require_file(a.masks);
  const auto frames = read_frames(a.frames);
  const auto masks = read_masks(a.masks);
  if (frames.empty()) throw SyncError("no <timestamp>.pgm frames in " + a.frames);
  SensorGeometry geometry{frames.front().image.width, frames.front().image.height};
  if (a.width) geometry.width = *a.width;
  if (a.height) geometry.height = *a.height;
  const auto events = read_events_file(a.events, geometry);
  const auto labels = run_domel(events, frames, masks, DomelConfig{}, resolve_threads(a.threads));
  write_labels_file(a.out, labels);
  if (!a.overlays.empty()) dump_overlays(a.overlays, events, labels, frames);
  const auto fg = std::count_if(labels.begin(), labels.end(), [](const EventLabel& l) { return l.label == 1; });
  out << events.size() << " events labeled, " << fg << " foreground, " << frames.size() << " frames\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Event-based moving object segmentation toolkit"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate labeled synthetic sequences");
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--seed", sa.seed, "Random seed")->capture_default_str();
  synth->add_option("--objects", sa.objects, "Moving objects per sequence")->capture_default_str();
  synth->add_option("--sequences", sa.sequences, "Number of sequences (seq_XXX subdirectories when > 1)")
      ->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--width", sa.width)->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--height", sa.height)->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--duration-ms", sa.duration_ms)->capture_default_str();
  synth->add_option("--frame-ms", sa.frame_ms, "Frame and mask interval")->capture_default_str();
  synth->add_option("--contrast", sa.contrast, "Log-intensity contrast threshold")->capture_default_str();
  synth->add_option("--noise-rate", sa.noise_rate, "Noise events per pixel per second")->capture_default_str();

  GraphArgs ga;
  auto* graph = app.add_subcommand("graph", "Build kNN graphs from an event file");
  graph->add_option("--in", ga.in, "Event file")->required();
  graph->add_option("--window-ms", ga.window_ms)->capture_default_str();
  graph->add_option("--k", ga.k)->capture_default_str()->check(CLI::PositiveNumber);
  graph->add_option("--nmax", ga.nmax)->capture_default_str()->check(CLI::PositiveNumber);
  graph->add_option("--time-scale", ga.time_scale, "Pixels per microsecond or AUTO")->capture_default_str();
  graph->add_option("--out", ga.out, "Edge list output");
  graph->add_option("--width", ga.width);
  graph->add_option("--height", ga.height);

  TrainArgs ta;
  auto* trainc = app.add_subcommand("train", "Train a model");
  trainc->set_config("--config", "", "key=value training config");
  trainc->add_option("--data", ta.data, "Sequence directory")->required();
  trainc->add_option("--ckpt", ta.ckpt, "Checkpoint output")->required();
  trainc->add_option("--subsets", ta.subsets)->capture_default_str()->check(CLI::PositiveNumber);
  trainc->add_option("--epochs", ta.epochs)->capture_default_str();
  trainc->add_option("--batch", ta.batch)->capture_default_str()->check(CLI::PositiveNumber);
  trainc->add_option("--lr", ta.lr)->capture_default_str();
  trainc->add_option("--loss", ta.loss, "ce, focal or dual_focal")->capture_default_str();
  trainc->add_option("--gamma", ta.gamma)->capture_default_str();
  trainc->add_option("--class-weights", ta.class_weights, "auto or w_background,w_foreground")->capture_default_str();
  trainc->add_option("--seed", ta.seed)->capture_default_str();
  trainc->add_option("--dims", ta.dims, "Encoder widths")->capture_default_str();
  trainc->add_option("--global-dim", ta.global_dim)->capture_default_str();
  trainc->add_option("--head-hidden", ta.head_hidden)->capture_default_str();
  trainc->add_option("--k", ta.k)->capture_default_str();
  trainc->add_option("--window-ms", ta.window_ms)->capture_default_str();
  trainc->add_option("--nmax", ta.nmax)->capture_default_str();
  trainc->add_option("--time-scale", ta.time_scale)->capture_default_str();
  trainc->add_option("--history", ta.history, "Per-epoch CSV");
  trainc->add_option("--threads", ta.threads);
  trainc->add_option("--width", ta.width);
  trainc->add_option("--height", ta.height);

  PredictArgs pa;
  auto* predict = app.add_subcommand("predict", "Label events with a trained model");
  predict->add_option("--ckpt", pa.ckpt)->required();
  predict->add_option("--in", pa.in)->required();
  predict->add_option("--out", pa.out)->required();
  predict->add_option("--window-ms", pa.window_ms, "Defaults to the training value");
  predict->add_option("--nmax", pa.nmax, "Defaults to the training value");
  predict->add_option("--time-scale", pa.time_scale, "Defaults to the training value");
  predict->add_option("--threads", pa.threads);
  predict->add_option("--width", pa.width);
  predict->add_option("--height", pa.height);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Score predicted labels against ground truth");
  eval->add_option("--pred", ea.pred)->required();
  eval->add_option("--gt", ea.gt)->required();
  eval->add_option("--events", ea.events, "Event file (default: events.txt beside --gt)");
  eval->add_option("--metrics", ea.metrics)->capture_default_str();
  eval->add_option("--report", ea.report, "Per-window CSV");
  eval->add_option("--window-ms", ea.window_ms)->capture_default_str();
  eval->add_option("--nmax", ea.nmax)->capture_default_str();
  eval->add_option("--width", ea.width);
  eval->add_option("--height", ea.height);

  LabelArgs la;
  auto* label = app.add_subcommand("label", "Label events from frames and object masks");
  label->add_option("--events", la.events)->required();
  label->add_option("--frames", la.frames)->required();
  label->add_option("--masks", la.masks)->required();
  label->add_option("--out", la.out)->required();
  label->add_option("--dump-overlays", la.overlays, "Write per-frame PGM overlays here");
  label->add_option("--threads", la.threads);
  label->add_option("--width", la.width);
  label->add_option("--height", la.height);

  std::vector<std::string> reversed(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(reversed.begin(), reversed.end());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    for (auto* cmd : app.get_subcommands()) print_config(out, *cmd);
    if (*synth) run_synth(sa, out);
    if (*graph) run_graph(ga, out);
    if (*trainc) run_train(ta, out);
    if (*predict) run_predict(pa, out);
    if (*eval) run_eval(ea, out);
    if (*label) run_label(la, out);
  } catch (const CLI::Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace evseg
