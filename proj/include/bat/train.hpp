#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "bat/config.hpp"
#include "bat/data.hpp"
#include "bat/diagnostics.hpp"

namespace bat {

struct MetricsRow {
  int epoch = 0;
  double train_loss = 0.0;
  double clean_acc = 0.0;
  double robust_acc = 0.0;
  double mean_margin_clean = 0.0;
  double mean_margin_adv = 0.0;
  double mean_smoothness_kl = 0.0;
  std::optional<double> expected_margin_increase;
  std::optional<double> normalized_grad_norm;
  double r_nat = 0.0;
  double r_bdy = 0.0;
  double r_rob = 0.0;
};

/// Per-batch training statistics handed to TrainHooks::on_batch.
struct BatchStats {
  int epoch = 0;
  int batch = 0;
  double rate = 0.0;
  double loss = 0.0;
  std::optional<double> normalized_grad_norm;
  std::optional<double> expected_margin_increase;
};

struct TrainHooks {
  std::function<void(const BatchStats&)> on_batch;
  std::function<void(const MetricsRow&)> on_epoch;
  /// Stop after this many batches in total (0 = run every epoch).
  long max_batches = 0;
};

struct TrainResult {
  Checkpoint final_checkpoint;
  std::optional<Checkpoint> best_checkpoint;
  std::vector<MetricsRow> metrics;
};

struct EvalResult {
  double clean_acc = 0.0;
  double robust_acc = 0.0;
  std::vector<DiagnosticsRecord> records;
  ErrorDecomposition decomposition;
};

/// Clean and robust accuracy plus one diagnostics record per example. If the
/// attack moves a misclassified input to a correctly classified point, the
/// clean input is kept as x* (it is in the ball too), so quadrant II stays
/// empty and robust_acc <= clean_acc.
EvalResult evaluate(const DenseNet& net, const Dataset& data, const AttackConfig& attack, Rng& rng,
                    int chunk_size = 512);
EvalResult evaluate(const Checkpoint& ckpt, const Dataset& data, const AttackConfig& attack, Rng& rng);

/// Runs the configured method on `train_data`. Metrics rows are computed on
/// `monitor_data` with the evaluation attack after every epoch. Fully
/// determined by (cfg, data).
TrainResult train(const TrainConfig& cfg, const Dataset& train_data, const Dataset& monitor_data,
                  const TrainHooks& hooks = {});

/// Header plus one row per epoch; fixed column order, '.' decimals, '\n' line
/// endings. Missing values are empty fields.
void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows);
std::string metrics_csv(std::span<const MetricsRow> rows);

void write_diagnostics_csv(std::ostream& out, std::span<const DiagnosticsRecord> records);

/// Layer dims for a config and dataset: input dim, hidden widths, classes.
std::vector<int> layer_dims_for(const TrainConfig& cfg, const Dataset& data);

}  // namespace bat
