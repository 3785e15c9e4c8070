#include "bat/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "bat/errors.hpp"

namespace bat {

namespace {

// Independent, seed-derived streams so that e.g. evaluation never shifts the
// shuffling or attack noise of training.
Rng derive_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

enum Stream : std::uint64_t { kShuffle = 1, kAttack = 2, kEval = 3, kSelect = 4, kInit = 5 };

std::uint64_t init_seed(std::uint64_t seed) { return derive_rng(seed, kInit)(); }

}  // namespace

std::vector<int> layer_dims_for(const TrainConfig& cfg, const Dataset& data) {
  std::vector<int> dims{data.dim()};
  dims.insert(dims.end(), cfg.hidden_layers.begin(), cfg.hidden_layers.end());
  dims.push_back(data.num_classes);
  return dims;
}

EvalResult evaluate(const DenseNet& net, const Dataset& data, const AttackConfig& attack, Rng& rng,
                    int chunk_size) {
  data.validate();
  if (data.dim() != net.input_dim() || data.num_classes != net.output_dim()) {
    throw DimensionMismatch("evaluate: dataset does not match network");
  }
  attack.validate();
  EvalResult out;
  out.records.reserve(static_cast<std::size_t>(data.size()));
  const std::span<const int> all_labels(data.labels);
  for (Eigen::Index start = 0; start < data.size(); start += chunk_size) {
    const Eigen::Index n = std::min<Eigen::Index>(chunk_size, data.size() - start);
    const Matrix clean = data.features.middleCols(start, n);
    const auto labels = all_labels.subspan(static_cast<std::size_t>(start), static_cast<std::size_t>(n));
    const Matrix adv = pgd(net, clean, labels, attack, rng);
    const Matrix z = logits(net, clean);
    const Matrix z_adv = logits(net, adv);
    for (Eigen::Index j = 0; j < n; ++j) {
      const int y = labels[static_cast<std::size_t>(j)];
      const double m_clean = margin(softmax(z.col(j)), y);
      const double m_adv = margin(softmax(z_adv.col(j)), y);
      const bool keep_clean = m_clean <= 0.0 && m_adv > 0.0;
      out.records.push_back(make_record(z.col(j), keep_clean ? Vector(z.col(j)) : Vector(z_adv.col(j)), y));
    }
  }
  out.decomposition = quadrant_decomposition(out.records);
  const auto& d = out.decomposition;
  const auto total = static_cast<double>(d.total);
  out.clean_acc = static_cast<double>(d.total - d.natural_errors) / total;
  out.robust_acc = static_cast<double>(d.total - d.robust_errors) / total;
  return out;
}

EvalResult evaluate(const Checkpoint& ckpt, const Dataset& data, const AttackConfig& attack, Rng& rng) {
  return evaluate(ckpt.net, data, attack, rng);
}

TrainResult train(const TrainConfig& cfg, const Dataset& train_data, const Dataset& monitor_data,
                  const TrainHooks& hooks) {
  cfg.validate();
  train_data.validate();
  const std::vector<int> dims = layer_dims_for(cfg, train_data);
  if (!monitor_data.labels.empty() &&
      (monitor_data.dim() != train_data.dim() || monitor_data.num_classes != train_data.num_classes)) {
    throw DimensionMismatch("train: monitor data does not match training data");
  }

  DenseNet net = init_dense_net(dims, init_seed(cfg.seed));
  const AttackConfig attack = cfg.training_attack();
  Optimizer optimizer(cfg.optimizer, net.params);

  const auto n = train_data.size();
  const int batch_size = cfg.batch_size;
  const int batches_per_epoch = static_cast<int>((n + batch_size - 1) / batch_size);
  ScheduleConfig schedule = cfg.schedule;
  schedule.base_rate = cfg.optimizer.rate;
  schedule.total_epochs = cfg.epochs;
  schedule.batches_per_epoch = batches_per_epoch;

  Rng shuffle_rng = derive_rng(cfg.seed, kShuffle);
  Rng attack_rng = derive_rng(cfg.seed, kAttack);

  // Fixed monitor subset and best-checkpoint selection batch, both chosen by seed.
  const Dataset& monitor_source = monitor_data.labels.empty() ? train_data : monitor_data;
  std::vector<Eigen::Index> monitor_order(static_cast<std::size_t>(monitor_source.size()));
  std::iota(monitor_order.begin(), monitor_order.end(), Eigen::Index{0});
  Rng select_rng = derive_rng(cfg.seed, kSelect);
  std::shuffle(monitor_order.begin(), monitor_order.end(), select_rng);
  const std::span<const Eigen::Index> monitor_span(monitor_order);
  const Dataset monitor =
      cfg.diagnostics.monitor_examples > 0 &&
              static_cast<std::size_t>(cfg.diagnostics.monitor_examples) < monitor_order.size()
          ? monitor_source.subset(monitor_span.first(static_cast<std::size_t>(cfg.diagnostics.monitor_examples)))
          : monitor_source.subset(monitor_span);
  const Dataset selection = monitor_source.subset(
      monitor_span.first(std::min(monitor_order.size(), static_cast<std::size_t>(cfg.diagnostics.select_examples))));

  TrainResult result;
  double best_robust = -1.0;
  long batches_run = 0;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    int loss_count = 0;
    double emi_sum = 0.0;
    int emi_count = 0;
    double gn_sum = 0.0;
    int gn_count = 0;

    for (int b = 0; b < batches_per_epoch; ++b) {
      if (hooks.max_batches > 0 && batches_run >= hooks.max_batches) break;
      const auto begin = static_cast<std::size_t>(b) * static_cast<std::size_t>(batch_size);
      const auto count = std::min<std::size_t>(static_cast<std::size_t>(batch_size), order.size() - begin);
      const Dataset batch = train_data.subset(std::span<const Eigen::Index>(order).subspan(begin, count));

      const Matrix adv = pgd(net, batch.features, batch.labels, attack, attack_rng);
      const LossResult loss = objective(net, cfg.loss, batch.features, adv, batch.labels);

      BatchStats stats;
      stats.epoch = epoch;
      stats.batch = b;
      stats.loss = loss.value;
      stats.rate = lr_at(schedule, epoch, b);
      if (cfg.diagnostics.every_batches > 0 && batches_run % cfg.diagnostics.every_batches == 0) {
        stats.normalized_grad_norm = normalized_grad_norm(loss.value, loss.grads);
        stats.expected_margin_increase = expected_margin_increase(net, batch.features, batch.labels, loss.grads);
        if (stats.normalized_grad_norm) {
          gn_sum += *stats.normalized_grad_norm;
          ++gn_count;
        }
        emi_sum += *stats.expected_margin_increase;
        ++emi_count;
      }
      if (hooks.on_batch) hooks.on_batch(stats);

      optimizer.step(net.params, loss.grads, stats.rate);
      if (!net.params.all_finite()) throw Error("training diverged: non-finite parameters");
      loss_sum += loss.value;
      ++loss_count;
      ++batches_run;
    }

    Rng eval_rng = derive_rng(cfg.seed, kEval + 16 * static_cast<std::uint64_t>(epoch));
    const EvalResult eval = evaluate(net, monitor, cfg.eval_attack, eval_rng);
    MetricsRow row;
    row.epoch = epoch + 1;
    row.train_loss = loss_count > 0 ? loss_sum / loss_count : 0.0;
    row.clean_acc = eval.clean_acc;
    row.robust_acc = eval.robust_acc;
    for (const auto& r : eval.records) {
      row.mean_margin_clean += r.margin_clean;
      row.mean_margin_adv += r.margin_adv;
      row.mean_smoothness_kl += r.smoothness_kl;
    }
    const auto count = static_cast<double>(eval.records.size());
    row.mean_margin_clean /= count;
    row.mean_margin_adv /= count;
    row.mean_smoothness_kl /= count;
    if (emi_count > 0) row.expected_margin_increase = emi_sum / emi_count;
    if (gn_count > 0) row.normalized_grad_norm = gn_sum / gn_count;
    row.r_nat = eval.decomposition.r_nat;
    row.r_bdy = eval.decomposition.r_bdy;
    row.r_rob = eval.decomposition.r_rob;
    result.metrics.push_back(row);
    if (hooks.on_epoch) hooks.on_epoch(row);

    if (cfg.diagnostics.select_best) {
      Rng sel_rng = derive_rng(cfg.seed, kSelect + 16 * static_cast<std::uint64_t>(epoch));
      const double robust = evaluate(net, selection, cfg.eval_attack, sel_rng).robust_acc;
      if (robust > best_robust) {
        best_robust = robust;
        result.best_checkpoint = Checkpoint{net, to_json(cfg), epoch + 1, cfg.seed, {{"selection_robust_acc", robust}}};
      }
    }
    if (hooks.max_batches > 0 && batches_run >= hooks.max_batches) break;
  }

  const MetricsRow& last = result.metrics.back();
  result.final_checkpoint = Checkpoint{net,
                                       to_json(cfg),
                                       last.epoch,
                                       cfg.seed,
                                       {{"clean_acc", last.clean_acc}, {"robust_acc", last.robust_acc}}};
  return result;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows) {
  out << "epoch,train_loss,clean_acc,robust_acc,mean_margin_clean,mean_margin_adv,mean_smoothness_kl,"
         "expected_margin_increase,normalized_grad_norm,r_nat,r_bdy,r_rob\n";
  for (const auto& r : rows) {
    out << r.epoch << ',' << fmt(r.train_loss) << ',' << fmt(r.clean_acc) << ',' << fmt(r.robust_acc) << ','
        << fmt(r.mean_margin_clean) << ',' << fmt(r.mean_margin_adv) << ',' << fmt(r.mean_smoothness_kl) << ','
        << fmt(r.expected_margin_increase) << ',' << fmt(r.normalized_grad_norm) << ',' << fmt(r.r_nat) << ','
        << fmt(r.r_bdy) << ',' << fmt(r.r_rob) << '\n';
  }
}

std::string metrics_csv(std::span<const MetricsRow> rows) {
  std::ostringstream out;
  write_metrics_csv(out, rows);
  return out.str();
}

void write_diagnostics_csv(std::ostream& out, std::span<const DiagnosticsRecord> records) {
  out << "index,label,margin_clean,margin_adv,smoothness_kl,log_alpha_y,log_alpha_t,quadrant\n";
  std::size_t i = 0;
  for (const auto& r : records) {
    out << i++ << ',' << r.label << ',' << fmt(r.margin_clean) << ',' << fmt(r.margin_adv) << ','
        << fmt(r.smoothness_kl) << ',' << fmt(r.log_alpha_y) << ',' << fmt(r.log_alpha_t) << ','
        << to_string(r.quadrant) << '\n';
  }
}

}  // namespace bat
