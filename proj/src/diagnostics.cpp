#include "lbt/diagnostics.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "lbt/error.hpp"
#include "lbt/rng.hpp"

namespace lbt::diag {

namespace {

nn::Batch batch_from_indices(const data::Dataset& ds, std::span<const std::size_t> indices) {
  const std::size_t d = ds.dim();
  Tensor inputs = Tensor::zeros({indices.size(), d});
  std::vector<int> labels(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    for (std::size_t j = 0; j < d; ++j) inputs.at(i, j) = ds.inputs.at(src, j);
    labels[i] = ds.labels[src];
  }
  return nn::Batch{std::move(inputs), std::move(labels)};
}

std::vector<Tensor> gradient_on_indices(const nn::Model& model, const data::Dataset& ds,
                                        std::span<const std::size_t> indices) {
  const nn::Batch batch = batch_from_indices(ds, indices);
  nn::ForwardCache cache;
  nn::forward(model, batch, &cache);
  return nn::backward(model, cache, batch);
}

double deviation_norm(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  double sq = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t i = 0; i < a[k].numel(); ++i) {
      const double d = a[k][i] - b[k][i];
      sq += d * d;
    }
  }
  return std::sqrt(sq);
}

}  // namespace

std::vector<NormRecord> record_norms(const nn::Model& model, const std::vector<Tensor>& grads,
                                     long step, double epoch, double loss) {
  const auto groups = model.param_groups();
  if (grads.size() != groups.size()) {
    throw std::invalid_argument("record_norms: gradient count does not match parameter groups");
  }
  std::vector<NormRecord> records;
  records.reserve(groups.size());
  for (std::size_t k = 0; k < groups.size(); ++k) {
    NormRecord r;
    r.step = step;
    r.epoch = epoch;
    r.group_index = static_cast<int>(k);
    r.lwn = groups[k]->l2_norm();
    r.lgn = grads[k].l2_norm();
    r.lnr = r.lwn / (r.lgn + kLnrEps);
    r.loss = loss;
    r.exploded = r.lgn < kExplosionRatio * r.lwn;
    records.push_back(r);
  }
  return records;
}

void write_norms_jsonl(std::ostream& out, std::span<const NormRecord> records) {
  for (const NormRecord& r : records) {
    nlohmann::json j{{"step", r.step},   {"epoch", r.epoch}, {"group_index", r.group_index},
                     {"lwn", r.lwn},     {"lgn", r.lgn},     {"lnr", r.lnr},
                     {"loss", r.loss},   {"exploded", r.exploded}};
    out << j.dump() << '\n';
  }
}

std::vector<NormRecord> read_norms_jsonl(std::istream& in) {
  std::vector<NormRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    NormRecord r;
    r.step = j.at("step").get<long>();
    r.epoch = j.at("epoch").get<double>();
    r.group_index = j.at("group_index").get<int>();
    r.lwn = j.at("lwn").get<double>();
    r.lgn = j.at("lgn").get<double>();
    r.lnr = j.at("lnr").get<double>();
    r.loss = j.at("loss").get<double>();
    r.exploded = j.at("exploded").get<bool>();
    records.push_back(r);
  }
  return records;
}

std::vector<Tensor> general_gradient(const nn::Model& model, const data::Dataset& dataset) {
  dataset.validate();
  const std::size_t n = dataset.size();
  constexpr std::size_t kChunk = 1024;

  std::vector<Tensor> total;
  for (const Tensor* g : model.param_groups()) total.push_back(Tensor::zeros(g->shape));

  std::vector<std::size_t> indices;
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t count = std::min(kChunk, n - start);
    indices.resize(count);
    for (std::size_t i = 0; i < count; ++i) indices[i] = start + i;
    const std::vector<Tensor> chunk_grad = gradient_on_indices(model, dataset, indices);
    const double weight = static_cast<double>(count) / static_cast<double>(n);
    for (std::size_t k = 0; k < total.size(); ++k) {
      for (std::size_t i = 0; i < total[k].numel(); ++i) {
        total[k][i] += weight * chunk_grad[k][i];
      }
    }
  }
  return total;
}

VarianceEstimate batch_gradient_variance(const nn::Model& model, const data::Dataset& dataset,
                                         long batch_size, int trials, std::uint64_t seed) {
  dataset.validate();
  if (batch_size < 1) throw std::invalid_argument("batch_gradient_variance: batch_size must be >= 1");
  if (static_cast<std::size_t>(batch_size) > dataset.size()) {
    throw std::invalid_argument("batch_gradient_variance: batch_size " +
                                std::to_string(batch_size) + " exceeds dataset size " +
                                std::to_string(dataset.size()));
  }
  if (trials < 30) throw std::invalid_argument("batch_gradient_variance: trials must be >= 30");

  const std::vector<Tensor> full = general_gradient(model, dataset);

  double dev_sum = 0.0;
  std::vector<std::size_t> indices(dataset.size());
  for (int trial = 0; trial < trials; ++trial) {
    // Published splitting rule: trial i draws from seed + i.
    Rng rng(seed + static_cast<std::uint64_t>(trial));
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    // Partial Fisher-Yates: the first batch_size entries are a uniform
    // without-replacement sample.
    for (long i = 0; i < batch_size; ++i) {
      const std::size_t j = i + rng.index(indices.size() - static_cast<std::size_t>(i));
      std::swap(indices[static_cast<std::size_t>(i)], indices[j]);
    }
    const std::span<const std::size_t> sample(indices.data(),
                                              static_cast<std::size_t>(batch_size));
    const std::vector<Tensor> batch_grad = gradient_on_indices(model, dataset, sample);
    dev_sum += deviation_norm(full, batch_grad);
  }

  VarianceEstimate est;
  est.batch_size = batch_size;
  est.mean_dev = dev_sum / static_cast<double>(trials);
  est.trials = trials;
  est.seed = seed;
  return est;
}

void write_variance_csv(std::ostream& out, std::span<const VarianceEstimate> estimates) {
  out << "batch_size,mean_dev,sq_mean_dev,trials,seed\n";
  char buf[512];
  for (const VarianceEstimate& e : estimates) {
    std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g,%d,%llu\n", e.batch_size, e.mean_dev,
                  e.mean_dev * e.mean_dev, e.trials,
                  static_cast<unsigned long long>(e.seed));
    out << buf;
  }
}

double fit_loglog_slope(std::span<const std::pair<double, double>> points) {
  if (points.size() < 3) throw std::invalid_argument("fit_loglog_slope: need >= 3 points");
  double mean_x = 0.0, mean_y = 0.0;
  for (const auto& [b, value] : points) {
    if (!(b > 0.0) || !(value > 0.0)) {
      throw std::invalid_argument("fit_loglog_slope: points must be strictly positive");
    }
    mean_x += std::log(b);
    mean_y += std::log(value);
  }
  mean_x /= static_cast<double>(points.size());
  mean_y /= static_cast<double>(points.size());
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [b, value] : points) {
    const double dx = std::log(b) - mean_x;
    sxy += dx * (std::log(value) - mean_y);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_loglog_slope: degenerate abscissae");
  return sxy / sxx;
}

}  // namespace lbt::diag
