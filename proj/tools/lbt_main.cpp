#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lbt/error.hpp"
#include "lbt/harness.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIo = 4;

// Filename-level glob: `*` and `?` in the last path component only.
bool glob_match(const std::string& pattern, const std::string& name) {
  std::size_t p = 0, n = 0, star = std::string::npos, star_n = 0;
  while (n < name.size()) {
    if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == name[n])) {
      ++p;
      ++n;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      star_n = n;
    } else if (star != std::string::npos) {
      p = star + 1;
      n = ++star_n;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

std::vector<std::string> expand_glob(const std::string& pattern) {
  if (pattern.find('*') == std::string::npos && pattern.find('?') == std::string::npos) {
    return {pattern};
  }
  const fs::path as_path(pattern);
  const fs::path dir = as_path.parent_path().empty() ? "." : as_path.parent_path();
  const std::string name_pattern = as_path.filename().string();
  std::vector<std::string> matches;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (glob_match(name_pattern, entry.path().filename().string())) {
      matches.push_back(entry.path().string());
    }
  }
  std::sort(matches.begin(), matches.end());
  return matches;
}

long steps_per_epoch_of(const lbt::harness::RunConfig& cfg) {
  std::size_t n = 0;
  if (cfg.dataset_kind == lbt::harness::DatasetKind::kBlobs) {
    n = static_cast<std::size_t>(cfg.blobs_classes) *
        static_cast<std::size_t>(cfg.blobs_per_class);
  } else {
    std::error_code ec;
    if (fs::is_directory(cfg.cifar_path, ec)) {
      for (const auto& entry : fs::directory_iterator(cfg.cifar_path)) {
        if (entry.path().extension() == ".bin") {
          n += fs::file_size(entry.path()) / lbt::data::kCifarRecordBytes;
        }
      }
    } else {
      n = fs::file_size(cfg.cifar_path, ec) / lbt::data::kCifarRecordBytes;
      if (ec) throw lbt::IoError(cfg.cifar_path, "cannot stat: " + ec.message());
    }
  }
  const long train_n = static_cast<long>(n - n / 5);
  if (train_n < 1) throw lbt::ConfigError({"dataset too small"});
  return cfg.drop_last ? train_n / cfg.opt.batch_size
                       : (train_n + cfg.opt.batch_size - 1) / cfg.opt.batch_size;
}

int run_one(const std::string& config_path, std::ostream& out) {
  const auto cfg = lbt::harness::parse_config_file(config_path);
  const auto result = lbt::harness::run_experiment(cfg);
  if (result.diverged) {
    out << config_path << ": " << result.divergence_info << " (partial metrics in "
        << cfg.out_dir << ")\n";
    return kExitDivergence;
  }
  out << config_path << ": ok, final_eval_accuracy=" << result.final_eval_accuracy
      << ", metrics in " << cfg.out_dir << "\n";
  return kExitOk;
}

int classify_exception(std::ostream& err) {
  try {
    throw;
  } catch (const lbt::ConfigError& e) {
    for (const auto& issue : e.issues()) err << "config error: " << issue << "\n";
    return kExitConfig;
  } catch (const lbt::DivergenceError& e) {
    err << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const lbt::IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const lbt::DataFormatError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (...) {
    err << "error: unknown failure\n";
    return 1;
  }
}

void write_text_output(const std::string& out_path, const std::string& text) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw lbt::IoError(out_path, "cannot open for writing");
  out << text;
  if (!out.good()) throw lbt::IoError(out_path, "write failed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layer-wise adaptive large-batch training toolkit"};
  app.require_subcommand(1);

  std::string run_config;
  auto* cmd_run = app.add_subcommand("run", "Train one experiment from a config file");
  cmd_run->add_option("config", run_config, "run config file")->required();

  std::vector<std::string> sweep_patterns;
  int sweep_jobs = 1;
  auto* cmd_sweep = app.add_subcommand("sweep", "Run every config matching the glob(s)");
  cmd_sweep->add_option("globs", sweep_patterns, "config file globs")->required();
  cmd_sweep->add_option("--jobs", sweep_jobs, "concurrent runs")->default_val(1);

  std::string dump_config, dump_out;
  auto* cmd_schedule = app.add_subcommand("schedule", "Schedule utilities");
  auto* cmd_dump = cmd_schedule->add_subcommand("dump", "Emit CSV (t, value) of the schedule");
  cmd_dump->add_option("config", dump_config, "run config file")->required();
  cmd_dump->add_option("-o,--out", dump_out, "output file (default stdout)");

  std::string var_config, var_out;
  auto* cmd_variance =
      app.add_subcommand("variance", "Batch-gradient deviation sweep over batch sizes");
  cmd_variance->add_option("config", var_config, "run config file")->required();
  cmd_variance->add_option("-o,--out", var_out, "output file (default stdout)");

  std::vector<std::string> compare_paths;
  double acc_threshold = 0.9;
  auto* cmd_compare = app.add_subcommand("compare", "Summarize stored runs side by side");
  cmd_compare->add_option("paths", compare_paths, "run dirs or metrics.csv files")->required();
  cmd_compare->add_option("--acc-threshold", acc_threshold,
                          "accuracy for the epochs_to_threshold column")
      ->default_val(0.9);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (cmd_run->parsed()) {
      return run_one(run_config, std::cout);
    }

    if (cmd_sweep->parsed()) {
      std::vector<std::string> configs;
      for (const auto& pattern : sweep_patterns) {
        const auto matched = expand_glob(pattern);
        configs.insert(configs.end(), matched.begin(), matched.end());
      }
      if (configs.empty()) throw lbt::ConfigError({"sweep: no configs match"});
      const int jobs = std::max(1, sweep_jobs);
      int worst = kExitOk;
      for (std::size_t base = 0; base < configs.size(); base += jobs) {
        const std::size_t count = std::min<std::size_t>(jobs, configs.size() - base);
        std::vector<std::future<std::pair<int, std::string>>> wave;
        for (std::size_t i = 0; i < count; ++i) {
          wave.push_back(std::async(std::launch::async, [&configs, base, i]() {
            std::ostringstream log;
            int code;
            try {
              code = run_one(configs[base + i], log);
            } catch (...) {
              code = classify_exception(log);
            }
            return std::make_pair(code, log.str());
          }));
        }
        for (auto& f : wave) {
          const auto [code, log] = f.get();
          std::cout << log;
          worst = std::max(worst, code);
        }
      }
      return worst;
    }

    if (cmd_dump->parsed()) {
      const auto cfg = lbt::harness::parse_config_file(dump_config);
      const long spe = steps_per_epoch_of(cfg);
      const long total = cfg.epochs * spe;
      std::ostringstream csv;
      csv << "t,value\n";
      char buf[64];
      for (long t = 0; t < total; ++t) {
        std::snprintf(buf, sizeof(buf), "%.17g",
                      lbt::harness::schedule_value_at(cfg, t, spe));
        csv << t << ',' << buf << '\n';
      }
      write_text_output(dump_out, csv.str());
      return kExitOk;
    }

    if (cmd_variance->parsed()) {
      const auto cfg = lbt::harness::parse_config_file(var_config);
      if (cfg.variance_batch_sizes.empty()) {
        throw lbt::ConfigError({"variance.batch_sizes must be set for the variance command"});
      }
      const lbt::data::Dataset ds = lbt::harness::load_dataset(cfg);
      const auto model =
          lbt::nn::init_model(cfg.model_dims, {cfg.init_kind, lbt::harness::sub_seed(cfg.seed, 3)},
                              cfg.loss_kind, cfg.l2_coeff);
      std::vector<lbt::diag::VarianceEstimate> estimates;
      for (long b : cfg.variance_batch_sizes) {
        estimates.push_back(
            lbt::diag::batch_gradient_variance(model, ds, b, cfg.variance_trials, cfg.seed));
      }
      std::ostringstream csv;
      lbt::diag::write_variance_csv(csv, estimates);
      write_text_output(var_out, csv.str());
      if (estimates.size() >= 3) {
        std::vector<std::pair<double, double>> pts;
        pts.reserve(estimates.size());
        for (const auto& e : estimates) {
          pts.emplace_back(static_cast<double>(e.batch_size), e.mean_dev * e.mean_dev);
        }
        std::cerr << "loglog slope of squared deviation vs B: "
                  << lbt::diag::fit_loglog_slope(pts) << "\n";
      }
      return kExitOk;
    }

    if (cmd_compare->parsed()) {
      const auto summaries = lbt::harness::compare_runs(compare_paths, acc_threshold);
      std::cout << lbt::harness::format_comparison(summaries);
      return kExitOk;
    }
  } catch (...) {
    return classify_exception(std::cerr);
  }
  return kExitOk;
}
