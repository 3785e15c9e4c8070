#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bat/attack.hpp"
#include "bat/data.hpp"
#include "bat/losses.hpp"
#include "bat/optim.hpp"
#include "json.hpp"

namespace bat {

enum class DataSource { kGaussBlobs, kTwoMoons, kMnist };

struct DataConfig {
  DataSource source = DataSource::kGaussBlobs;
  int n = 1000;  // synthetic only
  int dim = 2;   // synthetic only
  std::uint64_t seed = 0;
  std::string images;  // MNIST IDX paths, relative to the config file
  std::string labels;
  std::optional<std::size_t> limit;
  double test_fraction = 0.2;
};

struct DiagnosticsConfig {
  int every_batches = 1;      // expected margin increase / grad-norm cadence; 0 disables
  int monitor_examples = 0;   // 0 = whole held-out split
  bool select_best = false;   // keep the checkpoint with the best robust accuracy
  int select_examples = 128;  // size of the fixed selection batch
};

/// Everything that determines a training run. JSON keys mirror the fields;
/// unknown keys are rejected.
struct TrainConfig {
  LossSpec loss;
  AttackConfig attack;       // training-time attack
  bool attack_inner_auto = true;  // pick the inner loss from the method
  AttackConfig eval_attack;
  OptimizerConfig optimizer;
  ScheduleConfig schedule;
  std::vector<int> hidden_layers{64};
  int epochs = 10;
  int batch_size = 64;
  std::uint64_t seed = 0;
  DataConfig data;
  DiagnosticsConfig diagnostics;

  /// Attack used during training, with the method's inner loss applied when
  /// `attack_inner_auto` is set.
  AttackConfig training_attack() const;
  void validate() const;
};

TrainConfig train_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig load_train_config(const std::filesystem::path& path);

const char* to_string(Method m);
Method method_from_string(const std::string& s);

/// Loads or generates the configured data and splits it into (train, test).
/// Relative MNIST paths are resolved against `base_dir`.
std::pair<Dataset, Dataset> load_data(const DataConfig& cfg, const std::filesystem::path& base_dir = {});

}  // namespace bat
