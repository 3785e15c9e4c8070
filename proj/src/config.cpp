#include "bat/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "bat/errors.hpp"

namespace bat {

namespace {

using nlohmann::json;

// Reads fields from one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return obj_.contains(key) ? &obj_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

template <typename E>
E parse_enum(const std::string& s, std::initializer_list<std::pair<const char*, E>> table, const std::string& where) {
  for (const auto& [name, value] : table) {
    if (s == name) return value;
  }
  throw ConfigError(where + ": unknown value '" + s + "'");
}

template <typename E>
const char* enum_name(E v, std::initializer_list<std::pair<const char*, E>> table) {
  for (const auto& [name, value] : table) {
    if (v == value) return name;
  }
  return "?";
}

const std::initializer_list<std::pair<const char*, Method>> kMethods = {
    {"AT", Method::kAT}, {"TRADES", Method::kTRADES}, {"BAT", Method::kBAT}};
const std::initializer_list<std::pair<const char*, InnerLoss>> kInner = {
    {"CE", InnerLoss::kCrossEntropy}, {"KL_FROM_CLEAN", InnerLoss::kKlFromClean}};
const std::initializer_list<std::pair<const char*, OptimizerKind>> kOptimizers = {
    {"SGD_MOMENTUM", OptimizerKind::kSgdMomentum}, {"ADAM", OptimizerKind::kAdam}};
const std::initializer_list<std::pair<const char*, ScheduleKind>> kSchedules = {
    {"CONSTANT", ScheduleKind::kConstant}, {"STEP_DECAY", ScheduleKind::kStepDecay}, {"CYCLIC", ScheduleKind::kCyclic}};
const std::initializer_list<std::pair<const char*, DataSource>> kSources = {
    {"GAUSS_BLOBS", DataSource::kGaussBlobs}, {"TWO_MOONS", DataSource::kTwoMoons}, {"MNIST", DataSource::kMnist}};

void read_attack(const json& obj, const std::string& where, AttackConfig& out, bool* inner_auto) {
  ObjectReader r(obj, where);
  r.read("epsilon", out.epsilon);
  r.read("steps", out.steps);
  r.read("step_size", out.step_size);
  r.read("restarts", out.restarts);
  r.read("random_start", out.random_start);
  std::string inner = inner_auto != nullptr && *inner_auto ? "AUTO" : enum_name(out.inner_loss, kInner);
  r.read("inner_loss", inner);
  if (inner == "AUTO") {
    if (inner_auto == nullptr) throw ConfigError(where + ".inner_loss: AUTO only applies to the training attack");
    *inner_auto = true;
  } else {
    out.inner_loss = parse_enum(inner, kInner, where + ".inner_loss");
    if (inner_auto != nullptr) *inner_auto = false;
  }
  r.finish();
}

json attack_json(const AttackConfig& a, bool inner_auto) {
  return {{"epsilon", a.epsilon},
          {"steps", a.steps},
          {"step_size", a.step_size},
          {"restarts", a.restarts},
          {"random_start", a.random_start},
          {"inner_loss", inner_auto ? "AUTO" : enum_name(a.inner_loss, kInner)}};
}

}  // namespace

const char* to_string(Method m) { return enum_name(m, kMethods); }

Method method_from_string(const std::string& s) { return parse_enum(s, kMethods, "method"); }

AttackConfig TrainConfig::training_attack() const {
  AttackConfig a = attack;
  if (attack_inner_auto) a.inner_loss = default_inner_loss(loss.method);
  return a;
}

void TrainConfig::validate() const {
  try {
    loss.validate();
    training_attack().validate();
    eval_attack.validate();
    optimizer.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  for (int h : hidden_layers) {
    if (h < 1) throw ConfigError("hidden layer widths must be >= 1");
  }
  if (schedule.kind == ScheduleKind::kCyclic && !(schedule.max_rate > 0.0)) {
    throw ConfigError("schedule.max_rate must be > 0");
  }
  if (schedule.kind != ScheduleKind::kCyclic && !(schedule.base_rate > 0.0)) {
    throw ConfigError("schedule base rate must be > 0");
  }
  if (diagnostics.every_batches < 0 || diagnostics.monitor_examples < 0 || diagnostics.select_examples < 1) {
    throw ConfigError("diagnostics counts out of range");
  }
}

TrainConfig train_config_from_json(const json& doc) {
  TrainConfig cfg;
  ObjectReader root(doc, "config");
  if (const json* j = root.child("loss")) {
    ObjectReader r(*j, "loss");
    std::string method = to_string(cfg.loss.method);
    std::string path = "LINEAR";
    r.read("method", method);
    r.read("beta", cfg.loss.beta);
    r.read("bridges_m", cfg.loss.bridges_m);
    r.read("path", path);
    cfg.loss.method = parse_enum(method, kMethods, "loss.method");
    if (path != "LINEAR") throw ConfigError("loss.path: only LINEAR is supported");
    r.finish();
  }
  if (const json* j = root.child("attack")) read_attack(*j, "attack", cfg.attack, &cfg.attack_inner_auto);
  if (const json* j = root.child("eval_attack")) read_attack(*j, "eval_attack", cfg.eval_attack, nullptr);
  if (const json* j = root.child("optimizer")) {
    ObjectReader r(*j, "optimizer");
    std::string kind = enum_name(cfg.optimizer.kind, kOptimizers);
    r.read("kind", kind);
    cfg.optimizer.kind = parse_enum(kind, kOptimizers, "optimizer.kind");
    r.read("rate", cfg.optimizer.rate);
    r.read("momentum", cfg.optimizer.momentum);
    r.read("weight_decay", cfg.optimizer.weight_decay);
    r.read("beta1", cfg.optimizer.beta1);
    r.read("beta2", cfg.optimizer.beta2);
    r.read("eps", cfg.optimizer.eps);
    r.finish();
  }
  if (const json* j = root.child("schedule")) {
    ObjectReader r(*j, "schedule");
    std::string kind = enum_name(cfg.schedule.kind, kSchedules);
    r.read("kind", kind);
    cfg.schedule.kind = parse_enum(kind, kSchedules, "schedule.kind");
    r.read("decay_epochs", cfg.schedule.decay_epochs);
    r.read("decay_factor", cfg.schedule.decay_factor);
    r.read("max_rate", cfg.schedule.max_rate);
    r.finish();
  }
  root.read("hidden_layers", cfg.hidden_layers);
  root.read("epochs", cfg.epochs);
  root.read("batch_size", cfg.batch_size);
  root.read("seed", cfg.seed);
  if (const json* j = root.child("data")) {
    ObjectReader r(*j, "data");
    std::string source = enum_name(cfg.data.source, kSources);
    r.read("source", source);
    cfg.data.source = parse_enum(source, kSources, "data.source");
    r.read("n", cfg.data.n);
    r.read("dim", cfg.data.dim);
    r.read("seed", cfg.data.seed);
    r.read("images", cfg.data.images);
    r.read("labels", cfg.data.labels);
    std::size_t limit = 0;
    r.read("limit", limit);
    if (limit > 0) cfg.data.limit = limit;
    r.read("test_fraction", cfg.data.test_fraction);
    r.finish();
  }
  if (const json* j = root.child("diagnostics")) {
    ObjectReader r(*j, "diagnostics");
    r.read("every_batches", cfg.diagnostics.every_batches);
    r.read("monitor_examples", cfg.diagnostics.monitor_examples);
    r.read("select_best", cfg.diagnostics.select_best);
    r.read("select_examples", cfg.diagnostics.select_examples);
    r.finish();
  }
  root.finish();
  cfg.schedule.base_rate = cfg.optimizer.rate;
  cfg.schedule.total_epochs = cfg.epochs;
  cfg.validate();
  return cfg;
}

json to_json(const TrainConfig& cfg) {
  return {
      {"loss",
       {{"method", to_string(cfg.loss.method)},
        {"beta", cfg.loss.beta},
        {"bridges_m", cfg.loss.bridges_m},
        {"path", "LINEAR"}}},
      {"attack", attack_json(cfg.attack, cfg.attack_inner_auto)},
      {"eval_attack", attack_json(cfg.eval_attack, false)},
      {"optimizer",
       {{"kind", enum_name(cfg.optimizer.kind, kOptimizers)},
        {"rate", cfg.optimizer.rate},
        {"momentum", cfg.optimizer.momentum},
        {"weight_decay", cfg.optimizer.weight_decay},
        {"beta1", cfg.optimizer.beta1},
        {"beta2", cfg.optimizer.beta2},
        {"eps", cfg.optimizer.eps}}},
      {"schedule",
       {{"kind", enum_name(cfg.schedule.kind, kSchedules)},
        {"decay_epochs", cfg.schedule.decay_epochs},
        {"decay_factor", cfg.schedule.decay_factor},
        {"max_rate", cfg.schedule.max_rate}}},
      {"hidden_layers", cfg.hidden_layers},
      {"epochs", cfg.epochs},
      {"batch_size", cfg.batch_size},
      {"seed", cfg.seed},
      {"data",
       {{"source", enum_name(cfg.data.source, kSources)},
        {"n", cfg.data.n},
        {"dim", cfg.data.dim},
        {"seed", cfg.data.seed},
        {"images", cfg.data.images},
        {"labels", cfg.data.labels},
        {"limit", cfg.data.limit.value_or(0)},
        {"test_fraction", cfg.data.test_fraction}}},
      {"diagnostics",
       {{"every_batches", cfg.diagnostics.every_batches},
        {"monitor_examples", cfg.diagnostics.monitor_examples},
        {"select_best", cfg.diagnostics.select_best},
        {"select_examples", cfg.diagnostics.select_examples}}},
  };
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return train_config_from_json(json::parse(buf.str()));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::pair<Dataset, Dataset> load_data(const DataConfig& cfg, const std::filesystem::path& base_dir) {
  Dataset all;
  switch (cfg.source) {
    case DataSource::kGaussBlobs:
      all = gen_synthetic(SyntheticKind::kGaussBlobs, cfg.n, cfg.seed, cfg.dim);
      break;
    case DataSource::kTwoMoons:
      all = gen_synthetic(SyntheticKind::kTwoMoons, cfg.n, cfg.seed, cfg.dim);
      break;
    case DataSource::kMnist: {
      auto resolve = [&](const std::string& p) {
        const std::filesystem::path path(p);
        return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
      };
      all = load_mnist_idx(resolve(cfg.images), resolve(cfg.labels), cfg.limit);
      break;
    }
  }
  return split_dataset(all, cfg.test_fraction, cfg.seed);
}

}  // namespace bat
