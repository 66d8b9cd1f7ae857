// Copyright 2026 The amlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "amlab/cli/run_config.hpp"

#include <fstream>
#include <iterator>
#include <set>

#include "amlab/rng.hpp"
#include "json.hpp"

namespace amlab::cli {
namespace {

using nlohmann::json;

// Reads typed fields from one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) fail(path_.empty() ? "config" : path_, "expected an object");
  }

  bool has(const std::string& key) const { return node_.contains(key); }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void read(const std::string& key, double& target) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(key_path(key), "expected a number");
      target = v->get<double>();
    }
  }
  void read(const std::string& key, bool& target) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(key_path(key), "expected true or false");
      target = v->get<bool>();
    }
  }
  void read(const std::string& key, std::string& target) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(key_path(key), "expected a string");
      target = v->get<std::string>();
    }
  }
  void read(const std::string& key, std::filesystem::path& target) {
    std::string s = target.string();
    read(key, s);
    target = s;
  }
  void read(const std::string& key, std::uint64_t& target) {
    if (const json* v = find(key)) target = as_unsigned(*v, key_path(key));
  }
  void read(const std::string& key, std::int64_t& target) {
    if (const json* v = find(key)) target = static_cast<std::int64_t>(as_unsigned(*v, key_path(key)));
  }
  void read(const std::string& key, int& target) {
    if (const json* v = find(key)) target = static_cast<int>(as_unsigned(*v, key_path(key)));
  }
  template <typename T>
  void read(const std::string& key, std::vector<T>& target) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(key_path(key), "expected an array");
      target.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        const std::string where = key_path(key) + "[" + std::to_string(i) + "]";
        if constexpr (std::is_same_v<T, double>) {
          if (!(*v)[i].is_number()) fail(where, "expected a number");
          target.push_back((*v)[i].template get<double>());
        } else {
          target.push_back(static_cast<T>(as_unsigned((*v)[i], where)));
        }
      }
    }
  }

  /// Call once every known key has been read.
  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (seen_.count(key) == 0) fail(key_path(key), "unknown key");
    }
  }

  [[noreturn]] static void fail(const std::string& where, const std::string& what) {
    throw ConfigError(where + ": " + what);
  }

 private:
  static std::uint64_t as_unsigned(const json& v, const std::string& where) {
    if (!v.is_number_unsigned()) fail(where, "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
void checked(const std::string& section, Fn&& fn) {
  try {
    fn();
  } catch (const DomainError& e) {
    throw ConfigError(section + ": " + e.what());
  }
}

void read_synthetic(ObjectReader& parent, RunConfig& config) {
  SyntheticData s;
  ObjectReader r(*parent.find("synthetic"), "data.synthetic");
  r.read("classes", s.classes);
  std::uint64_t dim = s.dim, train_n = s.train_per_class, eval_n = s.eval_per_class;
  r.read("dim", dim);
  r.read("train_per_class", train_n);
  r.read("eval_per_class", eval_n);
  r.read("spread", s.spread);
  r.finish();
  s.dim = dim;
  s.train_per_class = train_n;
  s.eval_per_class = eval_n;
  if (s.classes < 2) ObjectReader::fail("data.synthetic.classes", "need at least 2 classes");
  if (s.dim == 0) ObjectReader::fail("data.synthetic.dim", "must be positive");
  if (s.train_per_class < 2) ObjectReader::fail("data.synthetic.train_per_class", "need at least 2");
  if (s.eval_per_class < 2) ObjectReader::fail("data.synthetic.eval_per_class", "need at least 2");
  if (!(s.spread >= 0.0)) ObjectReader::fail("data.synthetic.spread", "must be non-negative");
  config.data.synthetic = s;
}

void read_idx(ObjectReader& parent, RunConfig& config) {
  IdxData d;
  ObjectReader r(*parent.find("idx"), "data.idx");
  std::string scaling = "unit";
  r.read("train_images", d.train_images);
  r.read("train_labels", d.train_labels);
  r.read("eval_images", d.eval_images);
  r.read("eval_labels", d.eval_labels);
  r.read("scaling", scaling);
  r.finish();
  if (d.train_images.empty() || d.train_labels.empty()) {
    ObjectReader::fail("data.idx", "train_images and train_labels are required");
  }
  if (d.eval_images.empty() != d.eval_labels.empty()) {
    ObjectReader::fail("data.idx", "eval_images and eval_labels go together");
  }
  if (scaling == "unit") {
    d.scaling = PixelScaling::unit;
  } else if (scaling == "centered") {
    d.scaling = PixelScaling::centered;
  } else {
    ObjectReader::fail("data.idx.scaling", "expected \"unit\" or \"centered\", got \"" + scaling + "\"");
  }
  config.data.idx = d;
}

void read_data(ObjectReader& root, RunConfig& config) {
  if (!root.has("data")) {
    root.find("data");
    config.data.synthetic = SyntheticData{};
    return;
  }
  ObjectReader r(*root.find("data"), "data");
  const bool synthetic = r.has("synthetic");
  const bool idx = r.has("idx");
  if (synthetic == idx) ObjectReader::fail("data", "expected exactly one of \"synthetic\" or \"idx\"");
  if (synthetic) read_synthetic(r, config);
  if (idx) read_idx(r, config);
  r.finish();
}

void read_mlp(ObjectReader& root, RunConfig& config) {
  if (!root.has("mlp")) return void(root.find("mlp"));
  ObjectReader r(*root.find("mlp"), "mlp");
  std::uint64_t embed = config.embed_dim;
  r.read("hidden", config.hidden);
  r.read("embed_dim", embed);
  r.finish();
  config.embed_dim = embed;
  if (config.hidden.empty()) ObjectReader::fail("mlp.hidden", "need at least one hidden layer");
  checked("mlp", [&] { config.mlp_for(1).validate(); });
}

void read_loss(ObjectReader& root, RunConfig& config) {
  if (!root.has("loss")) return void(root.find("loss"));
  ObjectReader r(*root.find("loss"), "loss");
  std::string variant = std::string(to_string(config.loss.variant));
  r.read("variant", variant);
  LossVariant v{};
  checked("loss.variant", [&] { v = parse_loss_variant(variant); });
  LossConfig& loss = config.loss;
  switch (v) {
    case LossVariant::softmax: loss = LossConfig::softmax(); break;
    case LossVariant::normface: loss = LossConfig::normface(); break;
    case LossVariant::a_softmax: loss = LossConfig::a_softmax(); break;
    case LossVariant::am_softmax: loss = LossConfig::am_softmax(); break;
  }
  r.read("s", loss.s);
  r.read("m", loss.m_add);
  r.read("m_mult", loss.m_mult);
  r.read("feature_norm", loss.feature_norm);
  r.read("weight_norm", loss.weight_norm);
  if (r.has("lambda")) {
    ObjectReader l(*r.find("lambda"), "loss.lambda");
    l.read("base", loss.lambda_schedule.lambda_base);
    l.read("min", loss.lambda_schedule.lambda_min);
    l.read("gamma", loss.lambda_schedule.gamma);
    l.read("power", loss.lambda_schedule.power);
    l.finish();
    const LambdaSchedule& s = loss.lambda_schedule;
    if (!(s.lambda_min >= 0.0 && s.lambda_base >= s.lambda_min && s.gamma >= 0.0 && s.power >= 0.0)) {
      ObjectReader::fail("loss.lambda", "need base >= min >= 0 and non-negative gamma, power");
    }
  } else {
    r.find("lambda");
  }
  r.finish();
  checked("loss", [&] { loss.validate(); });
}

void read_train(ObjectReader& root, RunConfig& config) {
  if (!root.has("train")) return void(root.find("train"));
  ObjectReader r(*root.find("train"), "train");
  TrainConfig& t = config.train;
  std::uint64_t batch = t.batch_size;
  r.read("lr", t.lr_base);
  r.read("lr_decay_iters", t.lr_decay_iters);
  r.read("lr_decay_factor", t.lr_decay_factor);
  r.read("momentum", t.momentum);
  r.read("weight_decay", t.weight_decay);
  r.read("batch_size", batch);
  r.read("iterations", t.total_iters);
  r.finish();
  t.batch_size = batch;
}

void read_eval(ObjectReader& root, RunConfig& config) {
  if (!root.has("eval")) return void(root.find("eval"));
  ObjectReader r(*root.find("eval"), "eval");
  EvalSettings& e = config.eval;
  std::uint64_t pairs = e.verification_pairs, gallery = e.gallery_per_class,
                probes = e.probe_per_class, distractors = e.distractor_classes;
  r.read("verification_pairs", pairs);
  r.read("far_targets", e.far_targets);
  r.read("gallery_per_class", gallery);
  r.read("probe_per_class", probes);
  r.read("distractor_classes", distractors);
  r.read("dir_far_target", e.dir_far_target);
  r.finish();
  e.verification_pairs = pairs;
  e.gallery_per_class = gallery;
  e.probe_per_class = probes;
  e.distractor_classes = distractors;
}

void check_eval(const RunConfig& config) {
  const EvalSettings& e = config.eval;
  if (e.verification_pairs == 0 || e.verification_pairs % 2 != 0) {
    ObjectReader::fail("eval.verification_pairs", "must be even and positive");
  }
  if (e.far_targets.empty()) ObjectReader::fail("eval.far_targets", "need at least one target");
  for (double t : e.far_targets) {
    if (!(t >= 0.0 && t <= 1.0)) ObjectReader::fail("eval.far_targets", "targets must lie in [0, 1]");
  }
  if (!(e.dir_far_target >= 0.0 && e.dir_far_target <= 1.0)) {
    ObjectReader::fail("eval.dir_far_target", "must lie in [0, 1]");
  }
  if (e.gallery_per_class == 0 || e.probe_per_class == 0) {
    ObjectReader::fail("eval", "gallery_per_class and probe_per_class must be positive");
  }
  if (const auto& s = config.data.synthetic) {
    if (e.distractor_classes >= static_cast<std::size_t>(s->classes)) {
      ObjectReader::fail("eval.distractor_classes", "must leave at least one enrolled class");
    }
    const std::size_t need = e.gallery_per_class + e.probe_per_class;
    if (s->eval_per_class < need || s->train_per_class < need) {
      ObjectReader::fail("eval", "each class needs gallery_per_class + probe_per_class samples");
    }
  }
}

}  // namespace

MlpConfig RunConfig::mlp_for(std::size_t input_dim) const {
  MlpConfig m;
  m.layer_widths.clear();
  m.layer_widths.push_back(input_dim);
  m.layer_widths.insert(m.layer_widths.end(), hidden.begin(), hidden.end());
  m.layer_widths.push_back(embed_dim);
  return m;
}

RunConfig parse_run_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig config;
  ObjectReader root(doc, "");
  root.read("seed", config.seed);
  root.read("out", config.out_dir);
  read_data(root, config);
  read_mlp(root, config);
  read_loss(root, config);
  read_train(root, config);
  read_eval(root, config);
  root.finish();
  checked("train", [&] { config.train.validate(); });
  check_eval(config);
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  return parse_run_config(std::string(std::istreambuf_iterator<char>(in), {}));
}

DerivedSeeds derive_seeds(std::uint64_t seed) {
  const Rng root(seed);
  return {root.fork(100).next_u64(), root.fork(101).next_u64(), root.fork(102).next_u64()};
}

namespace {

LabeledDataset load_split(const RunConfig& config, bool eval) {
  if (const auto& s = config.data.synthetic) {
    return synth_blobs(s->classes, s->dim, eval ? s->eval_per_class : s->train_per_class, s->spread,
                       derive_seeds(config.seed).data, eval ? 1 : 0);
  }
  const IdxData& d = *config.data.idx;
  if (eval && !d.eval_images.empty()) return parse_idx(d.eval_images, d.eval_labels, d.scaling);
  return parse_idx(d.train_images, d.train_labels, d.scaling);
}

}  // namespace

LabeledDataset load_train_split(const RunConfig& config) { return load_split(config, false); }
LabeledDataset load_eval_split(const RunConfig& config) { return load_split(config, true); }

}  // namespace amlab::cli
