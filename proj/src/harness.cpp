#include "lbt/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "lbt/error.hpp"
#include "lbt/rng.hpp"

namespace lbt::harness {

namespace fs = std::filesystem;

namespace {

constexpr const char* kMetricsHeader =
    "epoch,step,train_loss,eval_loss,eval_accuracy,base_lr_value,wall_ms";

}  // namespace

data::Dataset load_dataset(const RunConfig& cfg) {
  if (cfg.dataset_kind == DatasetKind::kBlobs) {
    return data::synth_blobs(cfg.blobs_per_class, cfg.blobs_classes, cfg.blobs_dim,
                             cfg.blobs_spread, sub_seed(cfg.seed, 1));
  }
  std::vector<data::Cifar10Record> records;
  std::error_code ec;
  if (fs::is_directory(cfg.cifar_path, ec)) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(cfg.cifar_path)) {
      if (entry.path().extension() == ".bin") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError(cfg.cifar_path, "no .bin files in directory");
    for (const auto& f : files) {
      auto batch = data::load_cifar10_file(f);
      records.insert(records.end(), batch.begin(), batch.end());
    }
  } else {
    records = data::load_cifar10_file(cfg.cifar_path);
  }
  return data::cifar10_to_dataset(records);
}

namespace {

struct Split {
  data::Dataset train;
  data::Dataset eval;
};

Split split_dataset(const data::Dataset& full, std::uint64_t seed) {
  const std::size_t n = full.size();
  if (n < 5) throw ConfigError({"dataset too small for the 80/20 split (need >= 5 examples)"});
  std::vector<std::size_t> perm = identity_permutation(n);
  Rng rng(seed);
  shuffle_indices(perm, rng);
  const std::size_t eval_count = n / 5;
  const std::span<const std::size_t> all(perm);
  return Split{data::take(full, all.subspan(0, n - eval_count)),
               data::take(full, all.subspan(n - eval_count))};
}

nn::Batch with_targets(nn::Batch batch, const RunConfig& cfg) {
  if (cfg.loss_kind == nn::LossKind::kSoftmaxCrossEntropy) return batch;
  const auto& labels = std::get<std::vector<int>>(batch.targets);
  const std::size_t d_out = cfg.model_dims.back();
  Tensor one_hot = Tensor::zeros({labels.size(), d_out});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    one_hot.at(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  batch.targets = std::move(one_hot);
  return batch;
}

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

EvalResult evaluate(const nn::Model& model, const data::Dataset& eval_set, const RunConfig& cfg) {
  constexpr long kChunk = 4096;
  data::BatchStream stream(eval_set, kChunk, 0, /*shuffle=*/false, /*drop_last=*/false);
  double loss_weighted = 0.0;
  std::size_t correct = 0;
  std::size_t seen = 0;
  while (auto raw = stream.next()) {
    const auto& labels = std::get<std::vector<int>>(raw->targets);
    const nn::Batch batch = with_targets(*raw, cfg);
    nn::ForwardCache cache;
    const double loss = nn::forward(model, batch, &cache);
    const Tensor& logits = cache.acts.back();
    for (std::size_t i = 0; i < batch.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < logits.dim(1); ++j) {
        if (logits.at(i, j) > logits.at(i, best)) best = j;
      }
      if (static_cast<int>(best) == labels[i]) ++correct;
    }
    loss_weighted += loss * static_cast<double>(batch.size());
    seen += batch.size();
  }
  EvalResult r;
  r.loss = loss_weighted / static_cast<double>(seen);
  r.accuracy = static_cast<double>(correct) / static_cast<double>(seen);
  return r;
}

void write_file_or_throw(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << contents;
  out.flush();
  if (!out) throw IoError(path.string(), "write failed");
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::uint64_t sub_seed(std::uint64_t run_seed, std::uint64_t purpose) {
  return mix_seed(run_seed, purpose);
}

double scaled_lr(double gamma_base, long batch_size, long base_batch_size) {
  if (batch_size < 1 || base_batch_size < 1) {
    throw std::invalid_argument("scaled_lr: batch sizes must be >= 1");
  }
  return gamma_base *
         std::sqrt(static_cast<double>(batch_size) / static_cast<double>(base_batch_size));
}

double schedule_value_at(const RunConfig& cfg, long global_step, long steps_per_epoch) {
  const long total_steps = cfg.epochs * steps_per_epoch;
  switch (cfg.schedule_kind) {
    case ScheduleKind::kTv: {
      schedule::TvConfig tv{cfg.sched_alpha, cfg.sched_lambda, cfg.sched_delay_epochs,
                            cfg.gamma_min_value(), cfg.gamma_target_value()};
      const double t_epochs =
          static_cast<double>(global_step) / static_cast<double>(steps_per_epoch);
      return tv.gamma_target * schedule::phi(tv, t_epochs);
    }
    case ScheduleKind::kWarmupCosine: {
      schedule::WarmupConfig wc;
      wc.gamma_scale = cfg.gamma_target_value();
      wc.warmup_steps = std::max<long>(
          1, std::lround(cfg.sched_warmup_epochs * static_cast<double>(steps_per_epoch)));
      wc.horizon = total_steps;
      wc.gamma_min = cfg.gamma_min_value();
      wc.validate();
      // Steps are 1-based against the schedule: the first step already moves.
      return schedule::warmup_cosine(wc, global_step + 1);
    }
    case ScheduleKind::kPoly: {
      schedule::PolyConfig pc;
      pc.gamma_start = cfg.gamma_target_value();
      pc.gamma_end = cfg.sched_poly_end.value_or(cfg.gamma_min_value());
      pc.power = cfg.sched_poly_power;
      pc.horizon = total_steps;
      pc.validate();
      return schedule::poly_decay(pc, global_step + 1);
    }
    case ScheduleKind::kConstant:
      return cfg.gamma_target_value();
  }
  throw std::invalid_argument("unknown schedule kind");
}

void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows) {
  out << kMetricsHeader << '\n';
  for (const MetricRow& r : rows) {
    out << r.epoch << ',' << r.step << ',' << format_double(r.train_loss) << ','
        << format_double(r.eval_loss) << ',' << format_double(r.eval_accuracy) << ','
        << format_double(r.base_lr_value) << ',' << format_double(r.wall_ms) << '\n';
  }
}

std::vector<MetricRow> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw DataFormatError("metrics csv: missing or unexpected header");
  }
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream cells_in(line);
    std::string cell;
    while (std::getline(cells_in, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) {
      throw DataFormatError("metrics csv: expected 7 columns, got " +
                            std::to_string(cells.size()));
    }
    try {
      MetricRow r;
      r.epoch = std::stol(cells[0]);
      r.step = std::stol(cells[1]);
      r.train_loss = std::stod(cells[2]);
      r.eval_loss = std::stod(cells[3]);
      r.eval_accuracy = std::stod(cells[4]);
      r.base_lr_value = std::stod(cells[5]);
      r.wall_ms = std::stod(cells[6]);
      rows.push_back(r);
    } catch (const std::exception&) {
      throw DataFormatError("metrics csv: unparseable row `" + line + "`");
    }
  }
  return rows;
}

RunResult run_experiment(const RunConfig& cfg) {
  if (cfg.out_dir.empty()) throw ConfigError({"run.out must be set for run_experiment"});
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw IoError(cfg.out_dir, "cannot create output directory: " + ec.message());

  const auto t_start = std::chrono::steady_clock::now();
  auto wall_ms_now = [&]() -> double {
    if (cfg.timing == TimingMode::kNone) return 0.0;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start)
        .count();
  };

  const data::Dataset full = load_dataset(cfg);
  const Split split = split_dataset(full, sub_seed(cfg.seed, 2));

  nn::Model model = nn::init_model(cfg.model_dims, {cfg.init_kind, sub_seed(cfg.seed, 3)},
                                   cfg.loss_kind, cfg.l2_coeff);
  std::vector<optim::GroupState> states =
      optim::init_states(model, cfg.optimizer_kind, cfg.opt);

  const long steps_per_epoch =
      data::batch_iterator(split.train, cfg.opt.batch_size, 0, false, cfg.drop_last)
          .batches_per_epoch();
  if (cfg.epochs > 0 && steps_per_epoch == 0) {
    throw ConfigError({"no training steps: batch size exceeds the train split with drop_last"});
  }

  schedule::TvConfig tv{cfg.sched_alpha, cfg.sched_lambda, cfg.sched_delay_epochs,
                        cfg.gamma_min_value(), cfg.gamma_target_value()};

  RunResult result;
  long global_step = 0;
  bool diverged = false;

  for (long epoch = 0; epoch < cfg.epochs && !diverged; ++epoch) {
    data::BatchStream stream(split.train, cfg.opt.batch_size,
                             sub_seed(cfg.seed, 4 + static_cast<std::uint64_t>(epoch)),
                             /*shuffle=*/true, cfg.drop_last);
    double loss_sum = 0.0;
    long step_count = 0;
    double last_base_lr = 0.0;
    try {
      while (auto raw = stream.next()) {
        const nn::Batch batch = with_targets(std::move(*raw), cfg);
        nn::ForwardCache cache;
        const double loss = nn::forward(model, batch, &cache);
        const std::vector<Tensor> grads = nn::backward(model, cache, batch);

        if (cfg.norms_every > 0 && global_step % cfg.norms_every == 0) {
          const double epoch_float =
              static_cast<double>(global_step) / static_cast<double>(steps_per_epoch);
          auto records = diag::record_norms(model, grads, global_step, epoch_float, loss);
          result.norms.insert(result.norms.end(), records.begin(), records.end());
        }

        const double base_lr = schedule_value_at(cfg, global_step, steps_per_epoch);
        const double t_epochs =
            static_cast<double>(global_step) / static_cast<double>(steps_per_epoch);
        optim::step(cfg.optimizer_kind, model, grads, cfg.opt, states, base_lr, tv, t_epochs);

        loss_sum += loss;
        last_base_lr = base_lr;
        ++global_step;
        ++step_count;
      }
    } catch (const DivergenceError& e) {
      diverged = true;
      result.diverged = true;
      result.divergence_info = "divergence at step " + std::to_string(global_step) + ": " +
                               e.what();
    }

    // A diverged model cannot be evaluated; flush what completed instead.
    const bool is_last = epoch + 1 == cfg.epochs;
    if (!diverged && ((epoch + 1) % cfg.eval_every == 0 || is_last)) {
      try {
        const EvalResult ev = evaluate(model, split.eval, cfg);
        MetricRow row;
        row.epoch = epoch + 1;
        row.step = global_step;
        row.train_loss = step_count > 0 ? loss_sum / static_cast<double>(step_count) : 0.0;
        row.eval_loss = ev.loss;
        row.eval_accuracy = ev.accuracy;
        row.base_lr_value = last_base_lr;
        row.wall_ms = wall_ms_now();
        result.metrics.push_back(row);
        result.final_eval_accuracy = ev.accuracy;
      } catch (const DivergenceError& e) {
        diverged = true;
        result.diverged = true;
        result.divergence_info = "divergence during evaluation after epoch " +
                                 std::to_string(epoch + 1) + ": " + e.what();
      }
    }
  }

  std::ostringstream metrics_text;
  write_metrics_csv(metrics_text, result.metrics);
  write_file_or_throw(fs::path(cfg.out_dir) / "metrics.csv", metrics_text.str());

  std::ostringstream norms_text;
  diag::write_norms_jsonl(norms_text, result.norms);
  write_file_or_throw(fs::path(cfg.out_dir) / "norms.jsonl", norms_text.str());

  if (result.diverged) {
    write_file_or_throw(fs::path(cfg.out_dir) / "events.log", result.divergence_info + "\n");
  }
  return result;
}

std::vector<RunSummary> compare_runs(std::span<const std::string> run_paths,
                                     double accuracy_threshold) {
  std::vector<RunSummary> summaries;
  for (const std::string& raw_path : run_paths) {
    fs::path path(raw_path);
    std::error_code ec;
    if (fs::is_directory(path, ec)) path /= "metrics.csv";
    std::ifstream in(path);
    if (!in) throw IoError(path.string(), "cannot open metrics file");
    const std::vector<MetricRow> rows = read_metrics_csv(in);
    RunSummary s;
    s.path = raw_path;
    if (!rows.empty()) {
      s.final_accuracy = rows.back().eval_accuracy;
      s.final_eval_loss = rows.back().eval_loss;
      for (const MetricRow& r : rows) {
        s.best_accuracy = std::max(s.best_accuracy, r.eval_accuracy);
        if (s.epochs_to_threshold < 0 && r.eval_accuracy >= accuracy_threshold) {
          s.epochs_to_threshold = r.epoch;
        }
      }
    }
    summaries.push_back(std::move(s));
  }
  std::stable_sort(summaries.begin(), summaries.end(),
                   [](const RunSummary& a, const RunSummary& b) {
                     return a.best_accuracy > b.best_accuracy;
                   });
  return summaries;
}

std::string format_comparison(std::span<const RunSummary> rows) {
  std::ostringstream out;
  out << "run,final_accuracy,best_accuracy,final_eval_loss,epochs_to_threshold\n";
  for (const RunSummary& s : rows) {
    out << s.path << ',' << format_double(s.final_accuracy) << ','
        << format_double(s.best_accuracy) << ',' << format_double(s.final_eval_loss) << ','
        << s.epochs_to_threshold << '\n';
  }
  return out.str();
}

}  // namespace lbt::harness
