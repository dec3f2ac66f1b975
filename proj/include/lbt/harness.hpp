#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lbt/data.hpp"
#include "lbt/diagnostics.hpp"
#include "lbt/nn.hpp"
#include "lbt/optim.hpp"
#include "lbt/schedule.hpp"

namespace lbt::harness {

enum class DatasetKind { kBlobs, kCifar10 };
enum class ScheduleKind { kTv, kWarmupCosine, kPoly, kConstant };
enum class TimingMode { kNone, kReal };

/// Parsed, validated run configuration. The file format is flat dotted keys,
/// one `key = value` per line, `#` comments; grammar documented in README.md.
struct RunConfig {
  // dataset.*
  DatasetKind dataset_kind = DatasetKind::kBlobs;
  int blobs_classes = 4;
  int blobs_per_class = 250;
  int blobs_dim = 32;
  double blobs_spread = 0.2;
  std::string cifar_path;

  // model.*
  std::vector<std::size_t> model_dims;
  nn::InitKind init_kind = nn::InitKind::kKaimingUniform;
  nn::LossKind loss_kind = nn::LossKind::kSoftmaxCrossEntropy;
  double l2_coeff = 0.0;

  // optimizer.*
  optim::OptimizerKind optimizer_kind = optim::OptimizerKind::kLars;
  optim::OptimizerConfig opt;

  // schedule.*
  ScheduleKind schedule_kind = ScheduleKind::kWarmupCosine;
  double sched_alpha = 1.0;
  double sched_lambda = 1e-3;
  double sched_delay_epochs = 10.0;
  std::optional<double> sched_gamma_min;     // default: B/B_base * 0.001
  std::optional<double> sched_gamma_target;  // default: scaled_lr(gamma_tuning, B, B_base)
  double sched_warmup_epochs = 2.0;
  double sched_poly_power = 2.0;
  std::optional<double> sched_poly_end;      // default: gamma_min

  // run.*
  long epochs = 0;
  long eval_every = 1;
  std::uint64_t seed = 1;
  std::string out_dir;
  long norms_every = 1;  // record norms every N steps; 0 disables
  TimingMode timing = TimingMode::kNone;
  bool drop_last = false;

  // variance.* (used by the `variance` subcommand)
  std::vector<long> variance_batch_sizes;
  int variance_trials = 200;

  double gamma_min_value() const;
  double gamma_target_value() const;
};

/// Parse + validate; throws ConfigError listing every problem at once.
RunConfig parse_config_file(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<string>");

/// The full dataset the config describes (blobs are generated, cifar10 is
/// loaded from a .bin file or a directory of them). No train/eval split.
data::Dataset load_dataset(const RunConfig& cfg);

/// Square-root LR scaling: gamma_base * sqrt(B / B_base).
double scaled_lr(double gamma_base, long batch_size, long base_batch_size);

struct MetricRow {
  long epoch = 0;
  long step = 0;
  double train_loss = 0.0;
  double eval_loss = 0.0;
  double eval_accuracy = 0.0;
  double base_lr_value = 0.0;
  double wall_ms = 0.0;
};

struct RunResult {
  std::vector<MetricRow> metrics;
  std::vector<diag::NormRecord> norms;
  bool diverged = false;
  std::string divergence_info;
  double final_eval_accuracy = 0.0;
};

/// Trains per cfg, writes metrics.csv and norms.jsonl under cfg.out_dir,
/// deterministic under (config, seed). A divergence flushes partial metrics,
/// records the event in events.log, and is reported via RunResult.diverged.
RunResult run_experiment(const RunConfig& cfg);

void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows);
std::vector<MetricRow> read_metrics_csv(std::istream& in);

struct RunSummary {
  std::string path;
  double final_accuracy = 0.0;
  double best_accuracy = 0.0;
  double final_eval_loss = 0.0;
  long epochs_to_threshold = -1;  // first epoch with eval_accuracy >= threshold
};

/// Pure function of the metrics files; sorted by best accuracy, descending.
std::vector<RunSummary> compare_runs(std::span<const std::string> run_paths,
                                     double accuracy_threshold);
std::string format_comparison(std::span<const RunSummary> rows);

/// Schedule value at a global step, as applied during training.
/// steps_per_epoch must match the run's epoch accounting.
double schedule_value_at(const RunConfig& cfg, long global_step, long steps_per_epoch);

/// Per-purpose sub-seed rule, published so runs can be reproduced piecewise:
/// dataset = mix_seed(seed, 1), split = mix_seed(seed, 2), init = mix_seed(seed, 3),
/// epoch shuffles = mix_seed(seed, 4 + epoch).
std::uint64_t sub_seed(std::uint64_t run_seed, std::uint64_t purpose);

}  // namespace lbt::harness
