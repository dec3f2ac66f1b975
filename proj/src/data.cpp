#include "lbt/data.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "lbt/error.hpp"
#include "lbt/rng.hpp"

namespace lbt::data {

void Dataset::validate() const {
  if (labels.empty()) throw std::invalid_argument("dataset is empty");
  if (inputs.shape.size() != 2 || inputs.dim(0) != labels.size()) {
    throw std::invalid_argument("dataset inputs must be [N x d] with one row per label");
  }
  if (class_count < 1) throw std::invalid_argument("dataset class_count must be >= 1");
  for (int y : labels) {
    if (y < 0 || y >= class_count) {
      throw std::invalid_argument("dataset label " + std::to_string(y) +
                                  " outside class count " + std::to_string(class_count));
    }
  }
}

Dataset synth_blobs(int n_per_class, int classes, int dim, double spread, std::uint64_t seed) {
  if (classes < 2) throw std::invalid_argument("synth_blobs: classes must be >= 2");
  if (dim < 1) throw std::invalid_argument("synth_blobs: dim must be >= 1");
  if (n_per_class < 1) throw std::invalid_argument("synth_blobs: n_per_class must be >= 1");
  if (spread < 0.0) throw std::invalid_argument("synth_blobs: spread must be >= 0");

  const std::size_t n = static_cast<std::size_t>(n_per_class) * static_cast<std::size_t>(classes);
  const std::size_t d = static_cast<std::size_t>(dim);

  // Class means on scaled basis vectors: distinct classes differ in exactly
  // two coordinates by 1/sqrt(2) each, so pairwise distance is 1 (a scaled
  // simplex). Classes beyond dim reuse axes at stacked magnitudes.
  const double unit = 1.0 / std::sqrt(2.0);
  auto mean_of = [&](int c, std::size_t j) {
    const std::size_t axis = static_cast<std::size_t>(c) % d;
    const std::size_t wrap = static_cast<std::size_t>(c) / d;
    const double tier = 1.0 + static_cast<double>(wrap);
    return j == axis ? unit * tier : 0.0;
  };

  Dataset ds;
  ds.class_count = classes;
  ds.inputs = Tensor::zeros({n, d});
  ds.labels.resize(n);
  Rng rng(seed);
  std::size_t row = 0;
  for (int c = 0; c < classes; ++c) {
    for (int i = 0; i < n_per_class; ++i, ++row) {
      ds.labels[row] = c;
      for (std::size_t j = 0; j < d; ++j) {
        const double noise = spread > 0.0 ? spread * rng.normal() : 0.0;
        ds.inputs.at(row, j) = mean_of(c, j) + noise;
      }
    }
  }

  // Per-dimension z-score; constant dimensions are centered only.
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += ds.inputs.at(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dv = ds.inputs.at(i, j) - mean;
      var += dv * dv;
    }
    var /= static_cast<double>(n);
    const double sd = std::sqrt(var);
    for (std::size_t i = 0; i < n; ++i) {
      double v = ds.inputs.at(i, j) - mean;
      if (sd > 1e-12) v /= sd;
      ds.inputs.at(i, j) = v;
    }
  }
  return ds;
}

Dataset take(const Dataset& ds, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("take: empty index set");
  Dataset out;
  out.class_count = ds.class_count;
  out.inputs = Tensor::zeros({indices.size(), ds.dim()});
  out.labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= ds.size()) throw std::invalid_argument("take: index out of range");
    for (std::size_t j = 0; j < ds.dim(); ++j) out.inputs.at(i, j) = ds.inputs.at(src, j);
    out.labels[i] = ds.labels[src];
  }
  return out;
}

std::vector<Cifar10Record> parse_cifar10_bin(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % kCifarRecordBytes != 0) {
    const std::size_t complete = bytes.size() / kCifarRecordBytes;
    throw DataFormatError("truncated cifar-10 input: ended at byte offset " +
                          std::to_string(bytes.size()) + " inside the record starting at " +
                          std::to_string(complete * kCifarRecordBytes) + " (records are " +
                          std::to_string(kCifarRecordBytes) + " bytes)");
  }
  const std::size_t count = bytes.size() / kCifarRecordBytes;
  std::vector<Cifar10Record> records(count);
  for (std::size_t r = 0; r < count; ++r) {
    const std::uint8_t* base = bytes.data() + r * kCifarRecordBytes;
    if (base[0] > 9) {
      throw DataFormatError("corrupt cifar-10 record " + std::to_string(r) + ": label byte " +
                            std::to_string(static_cast<int>(base[0])) + " > 9");
    }
    records[r].label = base[0];
    std::copy(base + 1, base + kCifarRecordBytes, records[r].pixels.begin());
  }
  return records;
}

std::vector<std::uint8_t> serialize_cifar10(std::span<const Cifar10Record> records) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(records.size() * kCifarRecordBytes);
  for (const Cifar10Record& r : records) {
    bytes.push_back(r.label);
    bytes.insert(bytes.end(), r.pixels.begin(), r.pixels.end());
  }
  return bytes;
}

std::vector<Cifar10Record> load_cifar10_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  // One record at a time; no whole-file buffer.
  std::vector<Cifar10Record> records;
  std::array<char, kCifarRecordBytes> buffer;
  std::size_t offset = 0;
  while (in.read(buffer.data(), static_cast<std::streamsize>(buffer.size())) ||
         in.gcount() > 0) {
    const std::size_t got = static_cast<std::size_t>(in.gcount());
    if (got < kCifarRecordBytes) {
      throw DataFormatError(path + ": truncated cifar-10 input: ended at byte offset " +
                            std::to_string(offset + got) + " inside the record starting at " +
                            std::to_string(offset) + " (records are " +
                            std::to_string(kCifarRecordBytes) + " bytes)");
    }
    const auto label = static_cast<std::uint8_t>(buffer[0]);
    if (label > 9) {
      throw DataFormatError(path + ": corrupt cifar-10 record " +
                            std::to_string(records.size()) + ": label byte " +
                            std::to_string(static_cast<int>(label)) + " > 9");
    }
    Cifar10Record record;
    record.label = label;
    std::copy(buffer.begin() + 1, buffer.end(),
              reinterpret_cast<char*>(record.pixels.data()));
    records.push_back(record);
    offset += kCifarRecordBytes;
  }
  if (in.bad()) throw IoError(path, "read failed");
  return records;
}

Dataset cifar10_to_dataset(std::span<const Cifar10Record> records) {
  if (records.empty()) throw std::invalid_argument("cifar10_to_dataset: no records");
  Dataset ds;
  ds.class_count = 10;
  ds.inputs = Tensor::zeros({records.size(), kCifarPixels});
  ds.labels.resize(records.size());
  for (std::size_t r = 0; r < records.size(); ++r) {
    ds.labels[r] = records[r].label;
    for (std::size_t j = 0; j < kCifarPixels; ++j) {
      ds.inputs.at(r, j) = static_cast<double>(records[r].pixels[j]) / 255.0;
    }
  }
  return ds;
}

BatchStream::BatchStream(const Dataset& dataset, long batch_size, std::uint64_t seed,
                         bool shuffle, bool drop_last)
    : dataset_(dataset), batch_size_(batch_size), drop_last_(drop_last) {
  dataset.validate();
  if (batch_size < 1) throw std::invalid_argument("batch_iterator: batch size must be >= 1");
  if (drop_last && static_cast<std::size_t>(batch_size) > dataset.size()) {
    throw std::invalid_argument("batch_iterator: batch size " + std::to_string(batch_size) +
                                " exceeds dataset size " + std::to_string(dataset.size()) +
                                " with drop_last");
  }
  order_ = identity_permutation(dataset.size());
  if (shuffle) {
    Rng rng(seed);
    shuffle_indices(order_, rng);
  }
}

long BatchStream::batches_per_epoch() const {
  const long n = static_cast<long>(dataset_.size());
  return drop_last_ ? n / batch_size_ : (n + batch_size_ - 1) / batch_size_;
}

std::optional<nn::Batch> BatchStream::next() {
  const std::size_t n = order_.size();
  if (cursor_ >= n) return std::nullopt;
  std::size_t count = std::min(static_cast<std::size_t>(batch_size_), n - cursor_);
  if (drop_last_ && count < static_cast<std::size_t>(batch_size_)) return std::nullopt;

  const std::size_t d = dataset_.dim();
  Tensor inputs = Tensor::zeros({count, d});
  std::vector<int> labels(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t src = order_[cursor_ + i];
    for (std::size_t j = 0; j < d; ++j) inputs.at(i, j) = dataset_.inputs.at(src, j);
    labels[i] = dataset_.labels[src];
  }
  cursor_ += count;
  return nn::Batch{std::move(inputs), std::move(labels)};
}

BatchStream batch_iterator(const Dataset& dataset, long batch_size, std::uint64_t seed,
                           bool shuffle, bool drop_last) {
  return BatchStream(dataset, batch_size, seed, shuffle, drop_last);
}

}  // namespace lbt::data
