#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "evseg/error.hpp"
#include "evseg/gtnn.hpp"

namespace evseg {
namespace {

constexpr char kMagic[4] = {'G', 'T', 'N', 'N'};

/// A named, flat view of one saved tensor.
struct StateEntry {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  double* values = nullptr;
};

std::string strip_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0
             ? s.substr(0, s.size() - suffix.size())
             : s;
}

std::vector<StateEntry> state_of(GtnnModel& model) {
  std::vector<StateEntry> out;
  for (Parameter* p : model.parameters()) {
    out.push_back({p->name, p->value.rows(), p->value.cols(), p->value.data()});
  }
  for (NormParams* n : model.norms()) {
    const std::string base = strip_suffix(n->scale.name, ".scale");
    out.push_back({base + ".running_mean", 1, n->running.mean.size(), n->running.mean.data()});
    out.push_back({base + ".running_var", 1, n->running.var.size(), n->running.var.data()});
  }
  return out;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const std::string& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  return v;
}

struct ParsedCheckpoint {
  KeyValueConfig config;
  std::vector<StateEntry> tensors;  // values unset
  std::string payload;
};

ParsedCheckpoint parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CorruptCheckpointError(path + ": bad magic");
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kCheckpointVersion) {
    throw CorruptCheckpointError(path + ": unsupported version " + std::to_string(version));
  }
  const std::uint32_t header_len = get_u32(bytes, 8);
  if (bytes.size() < 12 + static_cast<std::size_t>(header_len)) {
    throw CorruptCheckpointError(path + ": truncated header");
  }
  ParsedCheckpoint parsed;
  std::istringstream header(bytes.substr(12, header_len));
  std::string line;
  std::size_t total = 0;
  while (std::getline(header, line)) {
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "config") {
      std::string kv;
      ls >> kv;
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw CorruptCheckpointError(path + ": bad config line");
      parsed.config.set(kv.substr(0, eq), kv.substr(eq + 1));
    } else if (kind == "tensor") {
      StateEntry e;
      if (!(ls >> e.name >> e.rows >> e.cols)) throw CorruptCheckpointError(path + ": bad tensor line");
      total += e.rows * e.cols;
      parsed.tensors.push_back(e);
    } else if (!kind.empty()) {
      throw CorruptCheckpointError(path + ": unknown header entry '" + kind + "'");
    }
  }
  const std::size_t expected = 12 + static_cast<std::size_t>(header_len) + 4 * total;
  if (bytes.size() != expected) {
    throw CorruptCheckpointError(path + ": expected " + std::to_string(expected) + " bytes, found " +
                                 std::to_string(bytes.size()));
  }
  parsed.payload = bytes.substr(12 + header_len);
  return parsed;
}

void fill_model(GtnnModel& model, const ParsedCheckpoint& parsed, const std::string& path) {
  auto state = state_of(model);
  if (state.size() != parsed.tensors.size()) {
    throw ConfigMismatchError(path + ": checkpoint holds " + std::to_string(parsed.tensors.size()) +
                              " tensors, model has " + std::to_string(state.size()));
  }
  for (std::size_t i = 0; i < state.size(); ++i) {
    const StateEntry& want = state[i];
    const StateEntry& have = parsed.tensors[i];
    if (want.name != have.name || want.rows != have.rows || want.cols != have.cols) {
      throw ConfigMismatchError(path + ": tensor " + have.name + " [" + std::to_string(have.rows) +
                                "x" + std::to_string(have.cols) + "] does not match model tensor " +
                                want.name + " [" + std::to_string(want.rows) + "x" +
                                std::to_string(want.cols) + "]");
    }
  }
  std::size_t offset = 0;
  for (const StateEntry& e : state) {
    for (std::size_t j = 0; j < e.rows * e.cols; ++j) {
      const std::uint32_t bits = get_u32(parsed.payload, offset);
      offset += 4;
      float f;
      std::memcpy(&f, &bits, sizeof f);
      e.values[j] = static_cast<double>(f);
    }
  }
}

}  // namespace

void save_checkpoint(const GtnnModel& model, const std::string& path, const KeyValueConfig& extra) {
  GtnnModel& m = const_cast<GtnnModel&>(model);  // state_of only reads through the pointers
  const auto state = state_of(m);
  std::ostringstream header;
  KeyValueConfig config = model.config().to_kv();
  for (const auto& [k, v] : extra.entries()) {
    if (config.has(k)) throw ConfigMismatchError("checkpoint extra key '" + k + "' clashes with the model config");
    if (k.find_first_of(" \t\n=") != std::string::npos || v.find_first_of(" \t\n") != std::string::npos) {
      throw ConfigMismatchError("checkpoint extra entry '" + k + "' must not contain whitespace");
    }
    config.set(k, v);
  }
  for (const auto& [k, v] : config.entries()) header << "config " << k << '=' << v << '\n';
  for (const StateEntry& e : state) header << "tensor " << e.name << ' ' << e.rows << ' ' << e.cols << '\n';
  const std::string header_text = header.str();

  std::string bytes(kMagic, 4);
  put_u32(bytes, kCheckpointVersion);
  put_u32(bytes, static_cast<std::uint32_t>(header_text.size()));
  bytes += header_text;
  for (const StateEntry& e : state) {
    for (std::size_t j = 0; j < e.rows * e.cols; ++j) {
      const float f = static_cast<float>(e.values[j]);
      std::uint32_t bits;
      std::memcpy(&bits, &f, sizeof bits);
      put_u32(bytes, bits);
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path);
}

GtnnModel load_checkpoint(const std::string& path) {
  ParsedCheckpoint parsed = parse_file(path);
  GtnnConfig config;
  try {
    config = GtnnConfig::from_kv(parsed.config);
  } catch (const Error& e) {
    throw CorruptCheckpointError(path + ": invalid model config: " + e.what());
  }
  GtnnModel model(config);
  fill_model(model, parsed, path);
  return model;
}

KeyValueConfig read_checkpoint_config(const std::string& path) { return parse_file(path).config; }

void load_checkpoint_into(GtnnModel& model, const std::string& path) {
  fill_model(model, parse_file(path), path);
}

}  // namespace evseg
