#include "lbt/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "lbt/error.hpp"
#include "lbt/rng.hpp"

namespace lbt::nn {

namespace {

double apply_activation(Activation act, double z) {
  return act == Activation::kReLU ? std::max(z, 0.0) : z;
}

double activation_grad(Activation act, double z) {
  return act == Activation::kReLU ? (z > 0.0 ? 1.0 : 0.0) : 1.0;
}

const std::vector<int>& labels_of(const Batch& batch) {
  if (!std::holds_alternative<std::vector<int>>(batch.targets)) {
    throw std::invalid_argument("cross-entropy needs integer labels as targets");
  }
  return std::get<std::vector<int>>(batch.targets);
}

const Tensor& target_tensor_of(const Batch& batch) {
  if (!std::holds_alternative<Tensor>(batch.targets)) {
    throw std::invalid_argument("mse needs a [B x d_out] tensor as targets");
  }
  return std::get<Tensor>(batch.targets);
}

// Row-wise softmax log-probabilities, max-shifted.
void log_softmax_row(const Tensor& logits, std::size_t row, std::vector<double>& out) {
  const std::size_t d = logits.dim(1);
  double m = logits.at(row, 0);
  for (std::size_t j = 1; j < d; ++j) m = std::max(m, logits.at(row, j));
  double sum = 0.0;
  for (std::size_t j = 0; j < d; ++j) sum += std::exp(logits.at(row, j) - m);
  const double log_sum = std::log(sum) + m;
  out.resize(d);
  for (std::size_t j = 0; j < d; ++j) out[j] = logits.at(row, j) - log_sum;
}

void check_batch_against_model(const Model& model, const Batch& batch) {
  if (batch.inputs.shape.size() != 2) {
    throw std::invalid_argument("batch inputs must be [B x d_in]");
  }
  if (batch.size() < 1) throw std::invalid_argument("batch must hold at least one example");
  if (batch.inputs.dim(1) != model.input_dim()) {
    throw std::invalid_argument("batch dim " + std::to_string(batch.inputs.dim(1)) +
                                " does not match model input dim " +
                                std::to_string(model.input_dim()));
  }
  if (model.loss_kind == LossKind::kSoftmaxCrossEntropy) {
    const auto& labels = labels_of(batch);
    if (labels.size() != batch.size()) {
      throw std::invalid_argument("label count does not match batch size");
    }
    for (int y : labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= model.output_dim()) {
        throw std::invalid_argument("label " + std::to_string(y) + " outside class count " +
                                    std::to_string(model.output_dim()));
      }
    }
  } else {
    const Tensor& targets = target_tensor_of(batch);
    if (targets.shape.size() != 2 || targets.dim(0) != batch.size() ||
        targets.dim(1) != model.output_dim()) {
      throw std::invalid_argument("mse targets must be [B x d_out]");
    }
  }
}

}  // namespace

std::vector<Tensor*> Model::param_groups() {
  std::vector<Tensor*> groups;
  groups.reserve(group_count());
  for (auto& layer : layers) {
    groups.push_back(&layer.weights);
    groups.push_back(&layer.bias);
  }
  return groups;
}

std::vector<const Tensor*> Model::param_groups() const {
  std::vector<const Tensor*> groups;
  groups.reserve(group_count());
  for (const auto& layer : layers) {
    groups.push_back(&layer.weights);
    groups.push_back(&layer.bias);
  }
  return groups;
}

void Model::validate() const {
  if (layers.empty()) throw std::invalid_argument("model has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.weights.shape.size() != 2) {
      throw std::invalid_argument("layer " + std::to_string(l) + ": weights must be 2-D");
    }
    if (layer.bias.shape.size() != 1 || layer.bias.dim(0) != layer.fan_out()) {
      throw std::invalid_argument("layer " + std::to_string(l) + ": bias must be [fan_out]");
    }
    if (l > 0 && layers[l - 1].fan_out() != layer.fan_in()) {
      throw std::invalid_argument("layer " + std::to_string(l) + ": fan_in " +
                                  std::to_string(layer.fan_in()) +
                                  " incompatible with previous fan_out " +
                                  std::to_string(layers[l - 1].fan_out()));
    }
  }
  if (l2_coeff < 0.0) throw std::invalid_argument("l2_coeff must be >= 0");
}

Model init_model(const std::vector<std::size_t>& layer_dims, const InitScheme& scheme,
                 LossKind loss_kind, double l2_coeff) {
  if (layer_dims.size() < 2) {
    throw std::invalid_argument("init_model needs at least [input, output] dims");
  }
  for (std::size_t d : layer_dims) {
    if (d < 1) throw std::invalid_argument("init_model: zero layer dimension");
  }

  Model model;
  model.loss_kind = loss_kind;
  model.l2_coeff = l2_coeff;
  Rng rng(scheme.seed);
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const std::size_t fan_in = layer_dims[l];
    const std::size_t fan_out = layer_dims[l + 1];
    DenseLayer layer;
    layer.weights = Tensor::zeros({fan_out, fan_in});
    layer.bias = Tensor::zeros({fan_out});
    layer.activation =
        (l + 2 == layer_dims.size()) ? Activation::kIdentity : Activation::kReLU;

    const double n_in = static_cast<double>(fan_in);
    const double n_out = static_cast<double>(fan_out);
    switch (scheme.kind) {
      case InitKind::kXavierUniform: {
        const double bound = std::sqrt(6.0 / (n_in + n_out));
        for (double& w : layer.weights.data) w = rng.uniform(-bound, bound);
        break;
      }
      case InitKind::kXavierNormal: {
        const double std_dev = std::sqrt(2.0 / (n_in + n_out));
        for (double& w : layer.weights.data) w = std_dev * rng.normal();
        break;
      }
      case InitKind::kKaimingUniform: {
        // gain sqrt(2), bound gain * sqrt(3 / fan_in)
        const double bound = std::sqrt(6.0 / n_in);
        for (double& w : layer.weights.data) w = rng.uniform(-bound, bound);
        break;
      }
      case InitKind::kKaimingNormal: {
        const double std_dev = std::sqrt(2.0 / n_in);
        for (double& w : layer.weights.data) w = std_dev * rng.normal();
        break;
      }
    }
    model.layers.push_back(std::move(layer));
  }
  model.validate();
  return model;
}

double forward(const Model& model, const Batch& batch, ForwardCache* cache) {
  model.validate();
  check_batch_against_model(model, batch);
  batch.inputs.require_finite("batch inputs");

  const std::size_t batch_size = batch.size();
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.pre_acts.clear();
  c.acts.clear();
  c.batch_size = batch_size;
  c.acts.push_back(batch.inputs);

  for (const auto& layer : model.layers) {
    const Tensor& prev = c.acts.back();
    const std::size_t fan_in = layer.fan_in();
    const std::size_t fan_out = layer.fan_out();
    Tensor z = Tensor::zeros({batch_size, fan_out});
    for (std::size_t i = 0; i < batch_size; ++i) {
      for (std::size_t o = 0; o < fan_out; ++o) {
        double acc = layer.bias[o];
        for (std::size_t k = 0; k < fan_in; ++k) {
          acc += layer.weights.at(o, k) * prev.at(i, k);
        }
        z.at(i, o) = acc;
      }
    }
    if (!z.all_finite()) throw DivergenceError("non-finite activations in forward pass");
    Tensor a = z;
    for (double& v : a.data) v = apply_activation(layer.activation, v);
    c.pre_acts.push_back(std::move(z));
    c.acts.push_back(std::move(a));
  }

  const Tensor& output = c.acts.back();
  double data_loss = 0.0;
  if (model.loss_kind == LossKind::kSoftmaxCrossEntropy) {
    const auto& labels = labels_of(batch);
    std::vector<double> log_probs;
    for (std::size_t i = 0; i < batch_size; ++i) {
      log_softmax_row(output, i, log_probs);
      data_loss -= log_probs[static_cast<std::size_t>(labels[i])];
    }
    data_loss /= static_cast<double>(batch_size);
  } else {
    const Tensor& targets = target_tensor_of(batch);
    const std::size_t d_out = model.output_dim();
    for (std::size_t i = 0; i < output.numel(); ++i) {
      const double r = output[i] - targets[i];
      data_loss += r * r;
    }
    data_loss /= static_cast<double>(batch_size * d_out);
  }

  double reg = 0.0;
  if (model.l2_coeff > 0.0) {
    for (const Tensor* group : model.param_groups()) {
      for (double v : group->data) reg += v * v;
    }
    reg *= 0.5 * model.l2_coeff;
  }

  const double loss = data_loss + reg;
  if (!std::isfinite(loss)) throw DivergenceError("non-finite loss");
  return loss;
}

std::vector<Tensor> backward(const Model& model, const ForwardCache& cache, const Batch& batch) {
  if (cache.acts.size() != model.layers.size() + 1 ||
      cache.pre_acts.size() != model.layers.size() || cache.batch_size != batch.size()) {
    throw std::invalid_argument("backward: cache does not match this model/batch");
  }
  const std::size_t batch_size = batch.size();
  const std::size_t layer_count = model.layers.size();
  const Tensor& output = cache.acts.back();

  // d(loss)/d(output activations), mean reduction folded in.
  Tensor d_act = Tensor::zeros(output.shape);
  if (model.loss_kind == LossKind::kSoftmaxCrossEntropy) {
    const auto& labels = labels_of(batch);
    std::vector<double> log_probs;
    for (std::size_t i = 0; i < batch_size; ++i) {
      log_softmax_row(output, i, log_probs);
      for (std::size_t j = 0; j < model.output_dim(); ++j) {
        const double p = std::exp(log_probs[j]);
        const double indicator = (static_cast<std::size_t>(labels[i]) == j) ? 1.0 : 0.0;
        d_act.at(i, j) = (p - indicator) / static_cast<double>(batch_size);
      }
    }
  } else {
    const Tensor& targets = target_tensor_of(batch);
    const double scale = 2.0 / static_cast<double>(batch_size * model.output_dim());
    for (std::size_t i = 0; i < output.numel(); ++i) {
      d_act[i] = scale * (output[i] - targets[i]);
    }
  }

  std::vector<Tensor> grads(model.group_count());
  for (std::size_t li = layer_count; li-- > 0;) {
    const DenseLayer& layer = model.layers[li];
    const Tensor& z = cache.pre_acts[li];
    const Tensor& prev = cache.acts[li];
    const std::size_t fan_in = layer.fan_in();
    const std::size_t fan_out = layer.fan_out();

    Tensor dz = Tensor::zeros({batch_size, fan_out});
    for (std::size_t i = 0; i < dz.numel(); ++i) {
      dz[i] = d_act[i] * activation_grad(layer.activation, z[i]);
    }

    Tensor gw = Tensor::zeros({fan_out, fan_in});
    Tensor gb = Tensor::zeros({fan_out});
    for (std::size_t i = 0; i < batch_size; ++i) {
      for (std::size_t o = 0; o < fan_out; ++o) {
        const double d = dz.at(i, o);
        gb[o] += d;
        for (std::size_t k = 0; k < fan_in; ++k) {
          gw.at(o, k) += d * prev.at(i, k);
        }
      }
    }
    if (model.l2_coeff > 0.0) {
      for (std::size_t i = 0; i < gw.numel(); ++i) gw[i] += model.l2_coeff * layer.weights[i];
      for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] += model.l2_coeff * layer.bias[i];
    }

    if (li > 0) {
      Tensor d_prev = Tensor::zeros({batch_size, fan_in});
      for (std::size_t i = 0; i < batch_size; ++i) {
        for (std::size_t k = 0; k < fan_in; ++k) {
          double acc = 0.0;
          for (std::size_t o = 0; o < fan_out; ++o) {
            acc += dz.at(i, o) * layer.weights.at(o, k);
          }
          d_prev.at(i, k) = acc;
        }
      }
      d_act = std::move(d_prev);
    }
    grads[2 * li] = std::move(gw);
    grads[2 * li + 1] = std::move(gb);
  }
  return grads;
}

std::vector<Tensor> finite_diff_grad(const Model& model, const Batch& batch, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be > 0");
  Model probe = model;
  std::vector<Tensor*> groups = probe.param_groups();
  std::vector<Tensor> grads;
  grads.reserve(groups.size());
  for (Tensor* group : groups) {
    Tensor g = Tensor::zeros(group->shape);
    for (std::size_t j = 0; j < group->numel(); ++j) {
      const double original = (*group)[j];
      (*group)[j] = original + h;
      const double plus = forward(probe, batch);
      (*group)[j] = original - h;
      const double minus = forward(probe, batch);
      (*group)[j] = original;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw Error("finite_diff_grad: non-finite loss at perturbed point");
      }
      g[j] = (plus - minus) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

}  // namespace lbt::nn
