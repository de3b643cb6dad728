#include "splab/config.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <json.hpp>

namespace splab {

using nlohmann::json;

namespace {

template <typename E>
struct EnumName {
  E value;
  const char* name;
};

constexpr EnumName<Norm> kNorms[] = {{Norm::l1, "l1"}, {Norm::l2, "l2"}, {Norm::linf, "linf"}};
constexpr EnumName<AttackMode> kModes[] = {{AttackMode::oracle, "oracle"}, {AttackMode::data, "data"}};
constexpr EnumName<AttackLoss> kLosses[] = {{AttackLoss::l2_logits, "l2_logits"},
                                            {AttackLoss::cross_entropy, "cross_entropy"},
                                            {AttackLoss::cw_margin, "cw_margin"},
                                            {AttackLoss::linf_logit_gap, "linf_logit_gap"}};
constexpr EnumName<AugmentKind> kAugments[] = {{AugmentKind::random_crop, "random_crop"},
                                               {AugmentKind::horizontal_flip, "horizontal_flip"},
                                               {AugmentKind::rotation, "rotation"},
                                               {AugmentKind::gaussian, "gaussian"}};
constexpr EnumName<DatasetKind> kDatasets[] = {{DatasetKind::synthetic, "synthetic"},
                                               {DatasetKind::smooth_images, "smooth_images"},
                                               {DatasetKind::cifar10, "cifar10"}};

template <typename E, std::size_t N>
E lookup(const EnumName<E> (&table)[N], const std::string& s, const char* what) {
  for (const auto& e : table)
    if (s == e.name) return e.value;
  std::string options;
  for (const auto& e : table) options += std::string(options.empty() ? "" : ", ") + e.name;
  throw ConfigError(std::string("unknown ") + what + " '" + s + "' (expected one of: " + options + ")");
}

template <typename E, std::size_t N>
std::string name_of(const EnumName<E> (&table)[N], E v) {
  for (const auto& e : table)
    if (e.value == v) return e.name;
  return "unknown";
}

std::size_t line_of(const std::string& text, std::size_t pos) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < pos && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

// Position of `"key"` used as an object key, searching from `from`.
std::size_t find_key(const std::string& text, const std::string& key, std::size_t from) {
  const std::string quoted = "\"" + key + "\"";
  for (std::size_t pos = text.find(quoted, from); pos != std::string::npos; pos = text.find(quoted, pos + 1)) {
    std::size_t p = pos + quoted.size();
    while (p < text.size() && std::isspace(static_cast<unsigned char>(text[p]))) ++p;
    if (p < text.size() && text[p] == ':') return pos;
  }
  return std::string::npos;
}

// Line of a dotted key path such as "regime.epochs", if it appears in the text.
std::optional<std::size_t> line_of_path(const std::string& text, const std::string& path) {
  std::size_t from = 0, start = 0;
  bool found = false;
  while (start <= path.size()) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) return std::nullopt;
    const std::size_t p = find_key(text, key, from);
    if (p == std::string::npos) return std::nullopt;
    from = p;
    found = true;
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (!found) return std::nullopt;
  return line_of(text, from);
}

class Section {
 public:
  Section(const json& j, std::string path, const std::string& text, const std::string& source, std::size_t offset)
      : j_(j), path_(std::move(path)), text_(text), source_(source), offset_(offset) {
    if (!j_.is_object()) fail(offset_, path_ + " must be an object");
  }

  template <typename T>
  void take(const std::string& key, T& out) {
    auto it = j_.find(key);
    seen_.insert(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      fail(key_pos(key), "wrong type for " + qualified(key) + " (found " + it->type_name() + ")");
    }
  }

  std::optional<Section> child(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return std::nullopt;
    return Section(*it, qualified(key), text_, source_, key_pos(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) fail(key_pos(k), "unknown key " + qualified(k));
  }

  [[noreturn]] void fail_key(const std::string& key, const std::string& msg) const { fail(key_pos(key), msg); }

 private:
  std::size_t key_pos(const std::string& key) const {
    const std::size_t p = find_key(text_, key, offset_);
    return p == std::string::npos ? offset_ : p;
  }
  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  [[noreturn]] void fail(std::size_t pos, const std::string& msg) const {
    throw ConfigError(source_ + ":" + std::to_string(line_of(text_, pos)) + ": " + msg);
  }

  const json& j_;
  std::string path_;
  const std::string& text_;
  const std::string& source_;
  std::size_t offset_;
  std::set<std::string> seen_;
};

void read_theory_spec(Section& s, TheorySpec& t) {
  s.take("ambient_dim", t.ambient_dim);
  s.take("subspace_dim", t.subspace_dim);
  s.take("teacher_hidden", t.teacher_hidden);
  s.take("student_hidden", t.student_hidden);
  s.take("classes", t.classes);
  s.take("samples", t.samples);
  s.take("radius", t.radius);
  s.take("biases", t.biases);
  s.take("seed", t.seed);
  s.take("copy_teacher", t.copy_teacher);
  s.take("learning_rate", t.learning_rate);
  s.take("max_epochs", t.max_epochs);
  s.take("check_every", t.check_every);
  s.take("g1_target", t.g1_target);
  s.take("polish", t.polish);
  s.take("polish_iterations", t.polish_iterations);
  s.finish();
}

json theory_spec_json(const TheorySpec& t) {
  return json{{"ambient_dim", t.ambient_dim},   {"subspace_dim", t.subspace_dim},
              {"teacher_hidden", t.teacher_hidden}, {"student_hidden", t.student_hidden},
              {"classes", t.classes},           {"samples", t.samples},
              {"radius", t.radius},             {"biases", t.biases},
              {"seed", t.seed},                 {"copy_teacher", t.copy_teacher},
              {"learning_rate", t.learning_rate},
              {"max_epochs", t.max_epochs},     {"check_every", t.check_every},
              {"g1_target", t.g1_target},       {"polish", t.polish},
              {"polish_iterations", t.polish_iterations}};
}

json to_json(const ExperimentConfig& c) {
  const auto& d = c.dataset;
  const auto& t = c.teacher;
  const auto& s = c.student;
  const auto& r = c.regime;
  const auto& a = c.attack;
  const auto& m = c.metrics;
  return json{
      {"name", c.name},
      {"seed", c.seed},
      {"output", c.output},
      {"dataset",
       {{"kind", name_of(kDatasets, d.kind)}, {"dir", d.dir}, {"train_count", d.train_count},
        {"eval_count", d.eval_count}, {"height", d.height}, {"width", d.width}, {"ambient_dim", d.ambient_dim},
        {"subspace_dim", d.subspace_dim}, {"radius", d.radius}}},
      {"teacher",
       {{"arch", t.arch}, {"hidden", t.hidden}, {"classes", t.classes}, {"biases", t.biases},
        {"checkpoint", t.checkpoint}, {"train_epochs", t.train_epochs}, {"train_lr", t.train_lr},
        {"prune_ratio", t.prune_ratio}}},
      {"student", {{"scale", s.scale}, {"hidden", s.hidden}, {"checkpoint", s.checkpoint}}},
      {"regime",
       {{"names", r.names}, {"epochs", r.epochs}, {"batch_size", r.batch_size}, {"learning_rate", r.learning_rate},
        {"schedule", r.schedule}, {"augmentations", r.augmentations}, {"sigma", r.sigma},
        {"ccat_rho", r.ccat_rho}, {"rft_alpha", r.rft_alpha}, {"rft_steps", r.rft_steps},
        {"rft_step_size", r.rft_step_size}, {"robust_model", r.robust_model}, {"epoch_grid", r.epoch_grid}}},
      {"attack",
       {{"norm", a.norm}, {"epsilon", a.epsilon}, {"step_size", a.step_size}, {"iterations", a.iterations},
        {"mode", a.mode}, {"loss", a.loss}, {"random_init", a.random_init}, {"clip_lo", a.clip_lo},
        {"clip_hi", a.clip_hi}, {"train_iterations", a.train_iterations}}},
      {"metrics",
       {{"robust_accuracy", m.robust_accuracy}, {"nc", m.nc}, {"eps_in_out", m.eps_in_out},
        {"patch_pca_dims", m.patch_pca_dims}, {"attacks", m.attacks}, {"n_repeats", m.n_repeats},
        {"l2_epsilon", m.l2_epsilon}, {"l1_epsilon", m.l1_epsilon}, {"surrogate", m.surrogate},
        {"students", m.students}}},
      {"theory",
       {{"variants", c.theory.variants},
        {"fullrank", theory_spec_json(c.theory.fullrank)},
        {"lowrank", theory_spec_json(c.theory.lowrank)}}},
  };
}

const std::set<std::string> kAttackNames = {"linf_pgd", "l2_pgd", "l1_pgd", "fgsm", "cw", "transfer", "in_plane",
                                            "out_plane"};

}  // namespace

Norm norm_from_string(const std::string& s) { return lookup(kNorms, s, "norm"); }
AttackMode mode_from_string(const std::string& s) { return lookup(kModes, s, "attack mode"); }
AttackLoss loss_from_string(const std::string& s) { return lookup(kLosses, s, "attack loss"); }
AugmentKind augment_from_string(const std::string& s) { return lookup(kAugments, s, "augmentation"); }
std::string to_string(Norm n) { return name_of(kNorms, n); }
std::string to_string(AttackMode m) { return name_of(kModes, m); }
std::string to_string(AttackLoss l) { return name_of(kLosses, l); }
std::string to_string(AugmentKind a) { return name_of(kAugments, a); }

TheorySpec default_lowrank_spec() {
  TheorySpec t;
  t.ambient_dim = 10;
  t.subspace_dim = 4;
  t.biases = false;
  t.seed = 1;
  return t;
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ":" + std::to_string(line_of(text, e.byte > 0 ? e.byte - 1 : 0)) +
                      ": malformed JSON: " + e.what());
  }
  ExperimentConfig c;
  c.theory.lowrank = default_lowrank_spec();
  Section top(root, "", text, source, 0);
  top.take("name", c.name);
  top.take("seed", c.seed);
  top.take("output", c.output);
  if (auto s = top.child("dataset")) {
    std::string kind = name_of(kDatasets, c.dataset.kind);
    s->take("kind", kind);
    try {
      c.dataset.kind = lookup(kDatasets, kind, "dataset kind");
    } catch (const ConfigError& e) {
      s->fail_key("kind", e.what());
    }
    s->take("dir", c.dataset.dir);
    s->take("train_count", c.dataset.train_count);
    s->take("eval_count", c.dataset.eval_count);
    s->take("height", c.dataset.height);
    s->take("width", c.dataset.width);
    s->take("ambient_dim", c.dataset.ambient_dim);
    s->take("subspace_dim", c.dataset.subspace_dim);
    s->take("radius", c.dataset.radius);
    s->finish();
  }
  if (auto s = top.child("teacher")) {
    s->take("arch", c.teacher.arch);
    s->take("hidden", c.teacher.hidden);
    s->take("classes", c.teacher.classes);
    s->take("biases", c.teacher.biases);
    s->take("checkpoint", c.teacher.checkpoint);
    s->take("train_epochs", c.teacher.train_epochs);
    s->take("train_lr", c.teacher.train_lr);
    s->take("prune_ratio", c.teacher.prune_ratio);
    s->finish();
  }
  if (auto s = top.child("student")) {
    s->take("scale", c.student.scale);
    s->take("hidden", c.student.hidden);
    s->take("checkpoint", c.student.checkpoint);
    s->finish();
  }
  if (auto s = top.child("regime")) {
    auto& r = c.regime;
    s->take("names", r.names);
    s->take("epochs", r.epochs);
    s->take("batch_size", r.batch_size);
    s->take("learning_rate", r.learning_rate);
    s->take("schedule", r.schedule);
    s->take("augmentations", r.augmentations);
    s->take("sigma", r.sigma);
    s->take("ccat_rho", r.ccat_rho);
    s->take("rft_alpha", r.rft_alpha);
    s->take("rft_steps", r.rft_steps);
    s->take("rft_step_size", r.rft_step_size);
    s->take("robust_model", r.robust_model);
    s->take("epoch_grid", r.epoch_grid);
    s->finish();
  }
  if (auto s = top.child("attack")) {
    auto& a = c.attack;
    s->take("norm", a.norm);
    s->take("epsilon", a.epsilon);
    s->take("step_size", a.step_size);
    s->take("iterations", a.iterations);
    s->take("mode", a.mode);
    s->take("loss", a.loss);
    s->take("random_init", a.random_init);
    s->take("clip_lo", a.clip_lo);
    s->take("clip_hi", a.clip_hi);
    s->take("train_iterations", a.train_iterations);
    s->finish();
  }
  if (auto s = top.child("metrics")) {
    auto& m = c.metrics;
    s->take("robust_accuracy", m.robust_accuracy);
    s->take("nc", m.nc);
    s->take("eps_in_out", m.eps_in_out);
    s->take("patch_pca_dims", m.patch_pca_dims);
    s->take("attacks", m.attacks);
    s->take("n_repeats", m.n_repeats);
    s->take("l2_epsilon", m.l2_epsilon);
    s->take("l1_epsilon", m.l1_epsilon);
    s->take("surrogate", m.surrogate);
    s->take("students", m.students);
    s->finish();
  }
  if (auto s = top.child("theory")) {
    s->take("variants", c.theory.variants);
    if (auto f = s->child("fullrank")) read_theory_spec(*f, c.theory.fullrank);
    if (auto l = s->child("lowrank")) read_theory_spec(*l, c.theory.lowrank);
    s->finish();
  }
  top.finish();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (const auto line = line_of_path(text, msg.substr(0, msg.find_first_of(" :"))))
      throw ConfigError(source + ":" + std::to_string(*line) + ": " + msg);
    throw ConfigError(source + ": " + msg);
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

void ExperimentConfig::validate() const {
  // Library-level errors become config errors tagged with the key path.
  auto checked = [](const std::string& key, const auto& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(key + ": " + e.what());
    }
  };
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  auto path_exists = [&](const std::string& p, const std::string& key) {
    if (!p.empty()) require(std::filesystem::exists(p), key + ": path does not exist: " + p);
  };
  require(dataset.train_count >= 1, "dataset.train_count must be >= 1");
  require(dataset.eval_count >= 2, "dataset.eval_count must be >= 2");
  if (dataset.kind == DatasetKind::cifar10) {
    require(!dataset.dir.empty(), "dataset.dir is required for cifar10");
    path_exists(dataset.dir, "dataset.dir");
  }
  if (dataset.kind == DatasetKind::smooth_images) require(dataset.height >= 3 && dataset.width >= 3, "dataset image size must be >= 3");
  if (dataset.kind == DatasetKind::synthetic)
    require(dataset.subspace_dim >= 1 && dataset.subspace_dim <= dataset.ambient_dim,
            "dataset: need 1 <= subspace_dim <= ambient_dim");
  require(dataset.radius > 0.0, "dataset.radius must be positive");
  require(teacher.arch == "conv" || teacher.arch == "dense", "teacher.arch must be conv or dense");
  require(!teacher.hidden.empty(), "teacher.hidden must list at least one layer");
  for (auto h : teacher.hidden) require(h >= 1, "teacher.hidden entries must be >= 1");
  require(teacher.classes >= 2, "teacher.classes must be >= 2");
  require(teacher.prune_ratio >= 0.0 && teacher.prune_ratio < 1.0, "teacher.prune_ratio must be in [0, 1)");
  path_exists(teacher.checkpoint, "teacher.checkpoint");
  require(student.scale > 0.0, "student.scale must be positive");
  path_exists(student.checkpoint, "student.checkpoint");
  require(regime.epochs >= 1, "regime.epochs must be >= 1");
  require(regime.batch_size >= 1, "regime.batch_size must be >= 1");
  require(regime.learning_rate > 0.0, "regime.learning_rate must be > 0");
  require(regime.schedule == "constant" || regime.schedule == "step", "regime.schedule must be constant or step");
  require(!regime.names.empty(), "regime.names must not be empty");
  for (const auto& n : regime.names) checked("regime.names", [&] { regime_from_string(n); });
  for (const auto& a : regime.augmentations) checked("regime.augmentations", [&] { augment_from_string(a); });
  for (double rho : regime.ccat_rho) require(rho > 0.0, "regime.ccat_rho entries must be > 0");
  require(regime.rft_alpha >= 0.0, "regime.rft_alpha must be >= 0");
  path_exists(regime.robust_model, "regime.robust_model");
  for (auto e : regime.epoch_grid) require(e >= 1 && e <= regime.epochs, "regime.epoch_grid entries must lie in [1, epochs]");
  norm_from_string(attack.norm);
  mode_from_string(attack.mode);
  loss_from_string(attack.loss);
  checked("attack", [&] { attack_spec().validate(); });
  require(metrics.n_repeats >= 1, "metrics.n_repeats must be >= 1");
  for (const auto& a : metrics.attacks) require(kAttackNames.count(a) > 0, "metrics.attacks: unknown attack '" + a + "'");
  path_exists(metrics.surrogate, "metrics.surrogate");
  for (const auto& s : metrics.students) path_exists(s, "metrics.students");
  for (const auto& v : theory.variants) require(v == "fullrank" || v == "lowrank", "theory.variants: unknown variant '" + v + "'");
  checked("theory.fullrank", [&] { theory.fullrank.validate(); });
  checked("theory.lowrank", [&] { theory.lowrank.validate(); });
}

AttackSpec ExperimentConfig::attack_spec() const {
  AttackSpec s;
  s.norm = norm_from_string(attack.norm);
  s.epsilon = attack.epsilon;
  s.step_size = attack.step_size;
  s.iterations = attack.iterations;
  s.mode = mode_from_string(attack.mode);
  s.loss = loss_from_string(attack.loss);
  s.random_init = attack.random_init;
  s.clip_lo = attack.clip_lo;
  s.clip_hi = attack.clip_hi;
  return s;
}

TrainConfig ExperimentConfig::train_config(Regime r) const {
  TrainConfig t;
  t.regime = r;
  t.epochs = regime.epochs;
  t.batch_size = regime.batch_size;
  t.learning_rate = regime.learning_rate;
  t.schedule = regime.schedule == "step" ? LrSchedule::step : LrSchedule::constant;
  t.seed = seed;
  for (const auto& a : regime.augmentations) t.augmentations.push_back(augment_from_string(a));
  t.augment_options.sigma = regime.sigma;
  t.attack = attack_spec();
  t.attack.iterations = attack.train_iterations;
  t.attack.mode = AttackMode::oracle;
  t.ccat_rho = regime.ccat_rho.empty() ? 10.0 : regime.ccat_rho.front();
  t.rft_alpha = regime.rft_alpha;
  t.checkpoint_epochs = regime.epoch_grid;
  return t;
}

std::string serialize_config(const ExperimentConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

std::string config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_json(cfg).dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace splab
