#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lbt/error.hpp"
#include "lbt/harness.hpp"

namespace lbt::harness {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

/// Raw `key = value` pairs plus an error accumulator. Typed getters consume
/// keys so leftovers can be reported as unknown.
class KeyReader {
 public:
  KeyReader(const std::string& text, const std::string& origin, std::vector<std::string>& issues)
      : origin_(origin), issues_(issues) {
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string stripped = trim(line);
      if (stripped.empty() || stripped[0] == '#') continue;
      const auto eq = stripped.find('=');
      if (eq == std::string::npos) {
        issue("line " + std::to_string(line_no) + ": expected `key = value`, got `" + stripped +
              "`");
        continue;
      }
      const std::string key = trim(stripped.substr(0, eq));
      const std::string value = trim(stripped.substr(eq + 1));
      if (key.empty()) {
        issue("line " + std::to_string(line_no) + ": empty key");
        continue;
      }
      if (entries_.count(key) > 0) {
        issue("duplicate key `" + key + "`");
        continue;
      }
      entries_[key] = value;
    }
  }

  void issue(const std::string& what) { issues_.push_back(origin_ + ": " + what); }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::optional<std::string> raw(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    std::string value = std::move(it->second);
    entries_.erase(it);
    return value;
  }

  std::string get_string(const std::string& key, const std::string& fallback) {
    return raw(key).value_or(fallback);
  }

  double get_double(const std::string& key, double fallback) {
    const auto v = raw(key);
    if (!v) return fallback;
    try {
      std::size_t pos = 0;
      const double parsed = std::stod(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument("");
      return parsed;
    } catch (const std::exception&) {
      issue("key `" + key + "`: expected a number, got `" + *v + "`");
      return fallback;
    }
  }

  long get_long(const std::string& key, long fallback) {
    const auto v = raw(key);
    if (!v) return fallback;
    try {
      std::size_t pos = 0;
      const long parsed = std::stol(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument("");
      return parsed;
    } catch (const std::exception&) {
      issue("key `" + key + "`: expected an integer, got `" + *v + "`");
      return fallback;
    }
  }

  bool get_bool(const std::string& key, bool fallback) {
    const auto v = raw(key);
    if (!v) return fallback;
    if (*v == "true") return true;
    if (*v == "false") return false;
    issue("key `" + key + "`: expected true/false, got `" + *v + "`");
    return fallback;
  }

  std::vector<long> get_long_list(const std::string& key, std::vector<long> fallback) {
    const auto v = raw(key);
    if (!v) return fallback;
    std::vector<long> values;
    std::istringstream items(*v);
    std::string item;
    while (std::getline(items, item, ',')) {
      try {
        std::size_t pos = 0;
        values.push_back(std::stol(trim(item), &pos));
      } catch (const std::exception&) {
        issue("key `" + key + "`: expected comma-separated integers, got `" + *v + "`");
        return fallback;
      }
    }
    if (values.empty()) {
      issue("key `" + key + "`: empty list");
      return fallback;
    }
    return values;
  }

  void report_unknown() {
    for (const auto& [key, value] : entries_) {
      issue("unknown key `" + key + "`");
    }
  }

 private:
  std::string origin_;
  std::vector<std::string>& issues_;
  std::map<std::string, std::string> entries_;
};

template <typename Enum>
Enum parse_enum(KeyReader& reader, const std::string& key, const std::string& fallback,
                const std::vector<std::pair<std::string, Enum>>& table) {
  const std::string v = reader.get_string(key, fallback);
  for (const auto& [name, value] : table) {
    if (v == name) return value;
  }
  std::string expected;
  for (const auto& [name, value] : table) {
    if (!expected.empty()) expected += "|";
    expected += name;
  }
  reader.issue("key `" + key + "`: expected " + expected + ", got `" + v + "`");
  return table.front().second;
}

}  // namespace

double RunConfig::gamma_min_value() const {
  if (sched_gamma_min) return *sched_gamma_min;
  return static_cast<double>(opt.batch_size) / static_cast<double>(opt.base_batch_size) * 0.001;
}

double RunConfig::gamma_target_value() const {
  if (sched_gamma_target) return *sched_gamma_target;
  return scaled_lr(opt.gamma_tuning, opt.batch_size, opt.base_batch_size);
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  std::vector<std::string> issues;
  KeyReader reader(text, origin, issues);
  RunConfig cfg;

  cfg.dataset_kind = parse_enum<DatasetKind>(reader, "dataset.kind", "blobs",
                                             {{"blobs", DatasetKind::kBlobs},
                                              {"cifar10", DatasetKind::kCifar10}});
  cfg.blobs_classes = static_cast<int>(reader.get_long("dataset.classes", cfg.blobs_classes));
  cfg.blobs_per_class =
      static_cast<int>(reader.get_long("dataset.n_per_class", cfg.blobs_per_class));
  cfg.blobs_dim = static_cast<int>(reader.get_long("dataset.dim", cfg.blobs_dim));
  cfg.blobs_spread = reader.get_double("dataset.spread", cfg.blobs_spread);
  cfg.cifar_path = reader.get_string("dataset.path", "");

  if (const auto dims = reader.raw("model.dims")) {
    std::istringstream items(*dims);
    std::string item;
    bool ok = true;
    while (std::getline(items, item, ',')) {
      try {
        const long d = std::stol(trim(item));
        if (d < 1) ok = false;
        cfg.model_dims.push_back(static_cast<std::size_t>(d));
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok || cfg.model_dims.size() < 2) {
      reader.issue("key `model.dims`: expected >= 2 comma-separated positive integers");
      cfg.model_dims.clear();
    }
  } else {
    reader.issue("missing required key `model.dims`");
  }
  cfg.init_kind = parse_enum<nn::InitKind>(reader, "model.init", "kaiming_uniform",
                                           {{"kaiming_uniform", nn::InitKind::kKaimingUniform},
                                            {"kaiming_normal", nn::InitKind::kKaimingNormal},
                                            {"xavier_uniform", nn::InitKind::kXavierUniform},
                                            {"xavier_normal", nn::InitKind::kXavierNormal}});
  cfg.loss_kind = parse_enum<nn::LossKind>(reader, "model.loss", "softmax_ce",
                                           {{"softmax_ce", nn::LossKind::kSoftmaxCrossEntropy},
                                            {"mse", nn::LossKind::kMse}});
  cfg.l2_coeff = reader.get_double("model.l2", 0.0);

  if (!reader.has("optimizer.kind")) reader.issue("missing required key `optimizer.kind`");
  cfg.optimizer_kind = parse_enum<optim::OptimizerKind>(
      reader, "optimizer.kind", "lars",
      {{"lars", optim::OptimizerKind::kLars},
       {"sgd", optim::OptimizerKind::kSgd},
       {"lamb", optim::OptimizerKind::kLamb},
       {"tvlars", optim::OptimizerKind::kTvlars}});
  cfg.opt.eta = reader.get_double("optimizer.eta", cfg.opt.eta);
  cfg.opt.weight_decay = reader.get_double("optimizer.weight_decay", cfg.opt.weight_decay);
  cfg.opt.momentum = reader.get_double("optimizer.momentum", cfg.opt.momentum);
  cfg.opt.eps = reader.get_double("optimizer.eps", cfg.opt.eps);
  cfg.opt.batch_size = reader.get_long("optimizer.batch_size", cfg.opt.batch_size);
  cfg.opt.base_batch_size = reader.get_long("optimizer.base_batch_size", 512);
  cfg.opt.gamma_tuning = reader.get_double("optimizer.gamma_tuning", cfg.opt.gamma_tuning);
  cfg.opt.beta1 = reader.get_double("optimizer.beta1", cfg.opt.beta1);
  cfg.opt.beta2 = reader.get_double("optimizer.beta2", cfg.opt.beta2);
  cfg.opt.tvlars_heavy_ball =
      reader.get_bool("optimizer.tvlars_heavy_ball", cfg.opt.tvlars_heavy_ball);

  const std::string default_schedule =
      cfg.optimizer_kind == optim::OptimizerKind::kTvlars ? "tv" : "warmup_cosine";
  cfg.schedule_kind = parse_enum<ScheduleKind>(reader, "schedule.kind", default_schedule,
                                               {{"tv", ScheduleKind::kTv},
                                                {"warmup_cosine", ScheduleKind::kWarmupCosine},
                                                {"poly", ScheduleKind::kPoly},
                                                {"constant", ScheduleKind::kConstant}});
  cfg.sched_alpha = reader.get_double("schedule.alpha", cfg.sched_alpha);
  cfg.sched_lambda = reader.get_double("schedule.lambda", cfg.sched_lambda);
  cfg.sched_delay_epochs = reader.get_double("schedule.delay_epochs", cfg.sched_delay_epochs);
  if (reader.has("schedule.gamma_min")) {
    cfg.sched_gamma_min = reader.get_double("schedule.gamma_min", 0.0);
  }
  if (reader.has("schedule.gamma_target")) {
    cfg.sched_gamma_target = reader.get_double("schedule.gamma_target", 1.0);
  }
  cfg.sched_warmup_epochs = reader.get_double("schedule.warmup_epochs", cfg.sched_warmup_epochs);
  cfg.sched_poly_power = reader.get_double("schedule.poly_power", cfg.sched_poly_power);
  if (reader.has("schedule.poly_end")) {
    cfg.sched_poly_end = reader.get_double("schedule.poly_end", 0.0);
  }

  cfg.epochs = reader.get_long("run.epochs", 0);
  cfg.eval_every = reader.get_long("run.eval_every", 1);
  cfg.seed = static_cast<std::uint64_t>(reader.get_long("run.seed", 1));
  cfg.out_dir = reader.get_string("run.out", "");
  cfg.norms_every = reader.get_long("run.norms_every", 1);
  cfg.timing = parse_enum<TimingMode>(reader, "run.timing", "none",
                                      {{"none", TimingMode::kNone}, {"real", TimingMode::kReal}});
  cfg.drop_last = reader.get_bool("run.drop_last", false);

  cfg.variance_batch_sizes = reader.get_long_list("variance.batch_sizes", {});
  cfg.variance_trials = static_cast<int>(reader.get_long("variance.trials", 200));

  reader.report_unknown();

  // Cross-field validation; everything reported in one shot.
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) issues.push_back(origin + ": " + what);
  };
  check(cfg.epochs >= 0, "run.epochs must be >= 0");
  check(cfg.eval_every >= 1, "run.eval_every must be >= 1");
  check(cfg.norms_every >= 0, "run.norms_every must be >= 0");
  check(cfg.opt.batch_size >= 1, "optimizer.batch_size must be >= 1");
  check(cfg.opt.base_batch_size >= 1, "optimizer.base_batch_size must be >= 1");
  check(cfg.opt.momentum >= 0.0 && cfg.opt.momentum < 1.0, "optimizer.momentum must be in [0,1)");
  check(cfg.opt.eps > 0.0, "optimizer.eps must be > 0");
  check(cfg.opt.eta > 0.0, "optimizer.eta must be > 0");
  check(cfg.opt.weight_decay >= 0.0, "optimizer.weight_decay must be >= 0");
  check(cfg.opt.gamma_tuning > 0.0, "optimizer.gamma_tuning must be > 0");
  check(cfg.l2_coeff >= 0.0, "model.l2 must be >= 0");
  if (cfg.dataset_kind == DatasetKind::kBlobs) {
    check(cfg.blobs_classes >= 2, "dataset.classes must be >= 2");
    check(cfg.blobs_per_class >= 1, "dataset.n_per_class must be >= 1");
    check(cfg.blobs_dim >= 1, "dataset.dim must be >= 1");
    check(cfg.blobs_spread >= 0.0, "dataset.spread must be >= 0");
    if (!cfg.model_dims.empty()) {
      check(cfg.model_dims.front() == static_cast<std::size_t>(cfg.blobs_dim),
            "model.dims front must equal dataset.dim");
      if (cfg.loss_kind == nn::LossKind::kSoftmaxCrossEntropy) {
        check(cfg.model_dims.back() == static_cast<std::size_t>(cfg.blobs_classes),
              "model.dims back must equal dataset.classes for softmax_ce");
      }
    }
  } else {
    check(!cfg.cifar_path.empty(), "dataset.path required for cifar10");
    if (!cfg.model_dims.empty()) {
      check(cfg.model_dims.front() == data::kCifarPixels,
            "model.dims front must be 3072 for cifar10");
    }
  }
  if (cfg.optimizer_kind == optim::OptimizerKind::kTvlars) {
    check(cfg.schedule_kind == ScheduleKind::kTv, "tvlars requires schedule.kind = tv");
    check(cfg.sched_alpha > 0.0, "schedule.alpha must be > 0");
    check(cfg.sched_lambda > 0.0, "schedule.lambda must be > 0");
    check(cfg.sched_delay_epochs >= 0.0, "schedule.delay_epochs must be >= 0");
  } else {
    check(cfg.schedule_kind != ScheduleKind::kTv,
          "schedule.kind = tv is only valid with optimizer.kind = tvlars");
  }
  if (cfg.schedule_kind == ScheduleKind::kWarmupCosine) {
    check(cfg.sched_warmup_epochs > 0.0, "schedule.warmup_epochs must be > 0");
    check(cfg.epochs == 0 || cfg.sched_warmup_epochs < static_cast<double>(cfg.epochs),
          "schedule.warmup_epochs must be < run.epochs");
  }
  if (cfg.sched_gamma_min) check(*cfg.sched_gamma_min >= 0.0, "schedule.gamma_min must be >= 0");
  if (cfg.sched_gamma_target) {
    check(*cfg.sched_gamma_target > 0.0, "schedule.gamma_target must be > 0");
  }

  if (!issues.empty()) throw ConfigError(issues);
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open config");
  std::ostringstream text;
  text << in.rdbuf();
  if (in.bad()) throw IoError(path, "read failed");
  return parse_config_text(text.str(), path);
}

}  // namespace lbt::harness
