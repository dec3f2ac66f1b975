#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lbt/data.hpp"
#include "lbt/rng.hpp"
#include "lbt/error.hpp"
#include "lbt/harness.hpp"
#include "lbt/schedule.hpp"

using lbt::ConfigError;
using namespace lbt::harness;
namespace fs = std::filesystem;
namespace schedule = lbt::schedule;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::path("harness_test_tmp") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Small, fast tvlars run: 60 blob examples, 48 train, 3 steps per epoch.
std::string base_config(const std::string& out_dir) {
  return R"(# tvlars smoke config
dataset.kind = blobs
dataset.classes = 3
dataset.n_per_class = 20
dataset.dim = 4
dataset.spread = 0.4
model.dims = 4,8,3
model.init = xavier_uniform
optimizer.kind = tvlars
optimizer.eta = 0.01
optimizer.batch_size = 16
optimizer.base_batch_size = 16
optimizer.gamma_tuning = 1.0
schedule.kind = tv
schedule.lambda = 0.05
schedule.delay_epochs = 2
run.epochs = 4
run.eval_every = 1
run.seed = 11
run.out = )" + out_dir + "\n";
}

}  // namespace

TEST_CASE("square-root lr scaling") {
  CHECK(scaled_lr(2.5, 512, 512) == 2.5);
  CHECK(scaled_lr(1.0, 2048, 512) == 2.0);
  CHECK(scaled_lr(0.1, 8192, 512) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK_THROWS_AS(scaled_lr(1.0, 0, 512), std::invalid_argument);
}

TEST_CASE("config parsing fills every section") {
  const RunConfig cfg = parse_config_text(base_config("out"), "test");
  CHECK(cfg.dataset_kind == DatasetKind::kBlobs);
  CHECK(cfg.blobs_classes == 3);
  CHECK(cfg.model_dims == std::vector<std::size_t>{4, 8, 3});
  CHECK(cfg.optimizer_kind == lbt::optim::OptimizerKind::kTvlars);
  CHECK(cfg.schedule_kind == ScheduleKind::kTv);
  CHECK(cfg.opt.batch_size == 16);
  CHECK(cfg.sched_lambda == 0.05);
  CHECK(cfg.epochs == 4);
  CHECK(cfg.seed == 11);
  CHECK(cfg.out_dir == "out");
  // Defaults derived from the optimizer block.
  CHECK(cfg.gamma_min_value() == doctest::Approx(0.001).epsilon(1e-15));
  CHECK(cfg.gamma_target_value() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("config errors are reported all at once") {
  const std::string text = R"(
dataset.kind = blobs
dataset.classes = 1
model.dims = 4
optimizer.kind = tvlars
optimizer.batch_size = 0
schedule.kind = poly
made.up.key = 7
run.epochs = -1
)";
  try {
    parse_config_text(text, "multi");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.issues().size() >= 5);
    bool mentions_unknown = false;
    for (const auto& issue : e.issues()) {
      if (issue.find("made.up.key") != std::string::npos) mentions_unknown = true;
    }
    CHECK(mentions_unknown);
  }
}

TEST_CASE("config rejects malformed lines and duplicates") {
  CHECK_THROWS_AS(parse_config_text("model.dims 4,2\noptimizer.kind = lars\n", "x"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("run.seed = 1\nrun.seed = 2\nmodel.dims = 4,2\n"
                                    "dataset.dim = 4\ndataset.classes = 2\n"
                                    "optimizer.kind = lars\n",
                                    "x"),
                  ConfigError);
}

TEST_CASE("tv schedule only pairs with tvlars") {
  std::string text = base_config("out");
  text += "\n";
  CHECK_NOTHROW(parse_config_text(text, "ok"));
  std::string wrong = text;
  wrong.replace(wrong.find("optimizer.kind = tvlars"), 23, "optimizer.kind = lars\x20\x20");
  CHECK_THROWS_AS(parse_config_text(wrong, "bad"), ConfigError);
}

TEST_CASE("zero epochs writes a header-only metrics file") {
  const fs::path dir = fresh_dir("zero_epochs");
  RunConfig cfg = parse_config_text(base_config(dir.string()), "test");
  cfg.epochs = 0;
  const RunResult result = run_experiment(cfg);
  CHECK(result.metrics.empty());
  CHECK(slurp(dir / "metrics.csv") ==
        "epoch,step,train_loss,eval_loss,eval_accuracy,base_lr_value,wall_ms\n");
  CHECK(slurp(dir / "norms.jsonl").empty());
}

TEST_CASE("identical config and seed give byte-identical outputs") {
  const fs::path dir_a = fresh_dir("det_a");
  const fs::path dir_b = fresh_dir("det_b");
  run_experiment(parse_config_text(base_config(dir_a.string()), "test"));
  run_experiment(parse_config_text(base_config(dir_b.string()), "test"));
  CHECK(slurp(dir_a / "metrics.csv") == slurp(dir_b / "metrics.csv"));
  CHECK(slurp(dir_a / "norms.jsonl") == slurp(dir_b / "norms.jsonl"));

  const fs::path dir_c = fresh_dir("det_c");
  RunConfig other = parse_config_text(base_config(dir_c.string()), "test");
  other.seed = 12;
  run_experiment(other);
  CHECK(slurp(dir_a / "metrics.csv") != slurp(dir_c / "metrics.csv"));
}

TEST_CASE("epoch accounting matches the data module") {
  const fs::path dir = fresh_dir("accounting");
  RunConfig cfg = parse_config_text(base_config(dir.string()), "test");
  const RunResult result = run_experiment(cfg);
  // 60 examples, 12 held out, batch 16 -> ceil(48/16) = 3 steps per epoch.
  const auto full = lbt::data::synth_blobs(20, 3, 4, 0.4, sub_seed(cfg.seed, 1));
  std::vector<std::size_t> train_indices(full.size() - full.size() / 5);
  for (std::size_t i = 0; i < train_indices.size(); ++i) train_indices[i] = i;
  const long spe =
      lbt::data::batch_iterator(lbt::data::take(full, train_indices), 16, 0, false, false)
          .batches_per_epoch();
  CHECK(spe == 3);
  REQUIRE(!result.metrics.empty());
  CHECK(result.metrics.back().step == cfg.epochs * spe);
  CHECK(result.metrics.back().epoch == cfg.epochs);
  // One norms record per parameter group per step.
  CHECK(result.norms.size() ==
        static_cast<std::size_t>(cfg.epochs * spe) * (2 * (cfg.model_dims.size() - 1)));
}

TEST_CASE("logged base lr matches the schedule module exactly") {
  const fs::path dir = fresh_dir("wiring");
  RunConfig cfg = parse_config_text(base_config(dir.string()), "test");
  const RunResult result = run_experiment(cfg);
  const long spe = 3;
  schedule::TvConfig tv{cfg.sched_alpha, cfg.sched_lambda, cfg.sched_delay_epochs,
                        cfg.gamma_min_value(), cfg.gamma_target_value()};
  for (const MetricRow& row : result.metrics) {
    const long last_step = row.step - 1;
    const double expected =
        tv.gamma_target * schedule::phi(tv, static_cast<double>(last_step) / spe);
    CHECK(row.base_lr_value == doctest::Approx(expected).epsilon(1e-12));
    CHECK(schedule_value_at(cfg, last_step, spe) == row.base_lr_value);
  }
}

TEST_CASE("warmup wiring uses one-based steps") {
  const fs::path dir = fresh_dir("warmup_wiring");
  std::string text = base_config(dir.string());
  text.replace(text.find("optimizer.kind = tvlars"), 23, "optimizer.kind = lars\x20\x20");
  text.replace(text.find("schedule.kind = tv"), 1, "#");  // fall back to warmup_cosine
  text += "schedule.warmup_epochs = 1\n";
  RunConfig cfg = parse_config_text(text, "test");
  const RunResult result = run_experiment(cfg);
  const long spe = 3;
  schedule::WarmupConfig wc{cfg.gamma_target_value(), spe, cfg.epochs * spe,
                            cfg.gamma_min_value()};
  for (const MetricRow& row : result.metrics) {
    CHECK(row.base_lr_value ==
          doctest::Approx(schedule::warmup_cosine(wc, row.step)).epsilon(1e-12));
  }
}

TEST_CASE("metrics csv round-trips") {
  std::vector<MetricRow> rows(2);
  rows[0] = {1, 3, 0.5, 0.6, 0.25, 0.001, 0.0};
  rows[1] = {2, 6, 0.25, 0.3, 0.875, 0.0005, 12.5};
  std::stringstream stream;
  write_metrics_csv(stream, rows);
  const auto parsed = read_metrics_csv(stream);
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[1].epoch == 2);
  CHECK(parsed[1].eval_accuracy == 0.875);
  CHECK(parsed[0].base_lr_value == 0.001);

  std::stringstream bad("not,a,metrics,file\n");
  CHECK_THROWS_AS(read_metrics_csv(bad), lbt::DataFormatError);
}

TEST_CASE("compare_runs summaries") {
  const fs::path dir = fresh_dir("compare");

  auto write_run = [&](const std::string& name, std::vector<MetricRow> rows) {
    const fs::path run_dir = dir / name;
    fs::create_directories(run_dir);
    std::ofstream out(run_dir / "metrics.csv", std::ios::binary);
    write_metrics_csv(out, rows);
    return (run_dir).string();
  };

  const std::string a = write_run("a", {{1, 3, 1.0, 1.1, 0.50, 0.1, 0.0},
                                        {2, 6, 0.8, 0.9, 0.72, 0.1, 0.0}});
  const std::string b = write_run("b", {{1, 3, 1.0, 1.0, 0.60, 0.1, 0.0},
                                        {2, 6, 0.7, 0.8, 0.95, 0.1, 0.0},
                                        {3, 9, 0.6, 0.9, 0.90, 0.1, 0.0}});
  const std::string c = write_run("c", {{1, 3, 1.2, 1.3, 0.40, 0.1, 0.0}});

  SUBCASE("single path") {
    const auto rows = compare_runs(std::vector<std::string>{a}, 0.7);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].final_accuracy == 0.72);
    CHECK(rows[0].best_accuracy == 0.72);
    CHECK(rows[0].epochs_to_threshold == 2);
  }

  SUBCASE("duplicated path gives identical rows") {
    const auto rows = compare_runs(std::vector<std::string>{a, a}, 0.7);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].final_accuracy == rows[1].final_accuracy);
    CHECK(rows[0].best_accuracy == rows[1].best_accuracy);
    CHECK(rows[0].epochs_to_threshold == rows[1].epochs_to_threshold);
  }

  SUBCASE("three runs sorted by best accuracy") {
    const auto rows = compare_runs(std::vector<std::string>{a, b, c}, 0.9);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].path == b);
    CHECK(rows[1].path == a);
    CHECK(rows[2].path == c);
    CHECK(rows[0].epochs_to_threshold == 2);
    CHECK(rows[0].final_accuracy == 0.90);
    CHECK(rows[1].epochs_to_threshold == -1);
    const std::string table = format_comparison(rows);
    CHECK(table.find("final_accuracy") != std::string::npos);
  }
}

TEST_CASE("divergent runs flush partial metrics and record the event") {
  const fs::path dir = fresh_dir("diverge");
  RunConfig cfg = parse_config_text(base_config(dir.string()), "test");
  cfg.sched_gamma_target = 1e120;
  cfg.epochs = 40;  // enough steps for the blow-up to hit inf
  const RunResult result = run_experiment(cfg);
  CHECK(result.diverged);
  CHECK(fs::exists(dir / "events.log"));
  CHECK(slurp(dir / "events.log").find("divergence at step") != std::string::npos);
  const std::string metrics = slurp(dir / "metrics.csv");
  CHECK(metrics.find("epoch,step") != std::string::npos);
}

TEST_CASE("run_experiment requires an output directory") {
  RunConfig cfg = parse_config_text(base_config("somewhere"), "test");
  cfg.out_dir.clear();
  CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
}

TEST_CASE("cifar10 configs load files and directories and train") {
  const fs::path dir = fresh_dir("cifar");
  lbt::Rng rng(606);
  auto write_bin = [&](const fs::path& path, int records) {
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(records) *
                                    lbt::data::kCifarRecordBytes);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng.index(256));
    for (int r = 0; r < records; ++r) {
      bytes[static_cast<std::size_t>(r) * lbt::data::kCifarRecordBytes] =
          static_cast<std::uint8_t>(rng.index(10));
    }
    std::ofstream f(path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  };
  write_bin(dir / "data_batch_1.bin", 40);
  write_bin(dir / "data_batch_2.bin", 20);

  std::ostringstream text;
  text << "dataset.kind = cifar10\n"
       << "dataset.path = " << dir.string() << "\n"
       << "model.dims = 3072,10\n"
          "optimizer.kind = lars\n"
          "optimizer.eta = 0.01\n"
          "optimizer.batch_size = 16\n"
          "optimizer.base_batch_size = 16\n"
          "optimizer.gamma_tuning = 0.1\n"
          "schedule.kind = constant\n"
          "run.epochs = 2\n"
          "run.seed = 4\n"
          "run.norms_every = 0\n"
       << "run.out = " << (dir / "out").string() << "\n";
  const RunConfig cfg = parse_config_text(text.str(), "cifar");

  const lbt::data::Dataset full = load_dataset(cfg);
  CHECK(full.size() == 60);
  CHECK(full.dim() == 3072);

  const RunResult result = run_experiment(cfg);
  CHECK_FALSE(result.diverged);
  REQUIRE(!result.metrics.empty());
  // Constant schedule: the logged base rate is gamma_target at every row.
  for (const MetricRow& row : result.metrics) {
    CHECK(row.base_lr_value == cfg.gamma_target_value());
  }
}

TEST_CASE("poly schedule wiring matches the module") {
  const fs::path dir = fresh_dir("poly_wiring");
  std::string text = base_config(dir.string());
  text.replace(text.find("optimizer.kind = tvlars"), 23, "optimizer.kind = lamb\x20\x20");
  text.replace(text.find("schedule.kind = tv"), 1, "#");
  text += "schedule.kind = poly\nschedule.poly_power = 2\nschedule.poly_end = 1e-4\n";
  const RunConfig cfg = parse_config_text(text, "poly");
  const RunResult result = run_experiment(cfg);
  const long spe = 3;
  schedule::PolyConfig pc{cfg.gamma_target_value(), 1e-4, 2.0, cfg.epochs * spe};
  REQUIRE(!result.metrics.empty());
  for (const MetricRow& row : result.metrics) {
    CHECK(row.base_lr_value ==
          doctest::Approx(schedule::poly_decay(pc, row.step)).epsilon(1e-12));
  }
}

TEST_CASE("mse training on one-hot targets still reports accuracy") {
  const fs::path dir = fresh_dir("mse_run");
  std::string text = base_config(dir.string());
  text += "model.loss = mse\n";
  const RunConfig cfg = parse_config_text(text, "mse");
  const RunResult result = run_experiment(cfg);
  CHECK_FALSE(result.diverged);
  REQUIRE(!result.metrics.empty());
  CHECK(result.final_eval_accuracy >= 0.0);
  CHECK(result.final_eval_accuracy <= 1.0);
}

TEST_CASE("small tvlars run learns the blobs") {
  // Regression fixture: 4 well-separated clusters, 30 epochs, large batch.
  const fs::path dir = fresh_dir("baseline");
  std::ostringstream text;
  text << "dataset.kind = blobs\n"
          "dataset.classes = 4\n"
          "dataset.n_per_class = 1000\n"
          "dataset.dim = 32\n"
          "dataset.spread = 0.2\n"
          "model.dims = 32,64,4\n"
          "model.init = kaiming_uniform\n"
          "optimizer.kind = tvlars\n"
          "optimizer.eta = 1.0\n"
          "optimizer.batch_size = 512\n"
          "optimizer.base_batch_size = 512\n"
          "optimizer.gamma_tuning = 0.02\n"
          "schedule.kind = tv\n"
          "schedule.lambda = 0.001\n"
          "schedule.delay_epochs = 2\n"
          "run.epochs = 30\n"
          "run.eval_every = 5\n"
          "run.seed = 1\n"
          "run.norms_every = 0\n"
       << "run.out = " << dir.string() << "\n";
  const RunResult result = run_experiment(parse_config_text(text.str(), "baseline"));
  CHECK_FALSE(result.diverged);
  CHECK(result.final_eval_accuracy > 0.9);
}
