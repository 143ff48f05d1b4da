#include "qlabgrad/nn.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace qlabgrad::nn {

void MlpSpec::validate() const {
  if (layer_widths.size() < 3) {
    throw std::invalid_argument("mlp: need input, at least one hidden layer, and output widths");
  }
  for (Eigen::Index w : layer_widths) {
    if (w < 1) throw std::invalid_argument("mlp: layer widths must be positive");
  }
  if (layer_widths.back() < 2) throw std::invalid_argument("mlp: output width (class count) must be >= 2");
}

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < spec_.layer_widths.size(); ++l) {
    const Eigen::Index in = spec_.layer_widths[l];
    const Eigen::Index out = spec_.layer_widths[l + 1];
    layers_.push_back({offset, out, in});
    offset += out * in + out;
  }
  param_count_ = offset;
}

void Mlp::check_params(const ParamVector& params) const {
  if (params.size() != param_count_) {
    std::ostringstream msg;
    msg << "mlp: expected " << param_count_ << " parameters, got " << params.size();
    throw std::invalid_argument(msg.str());
  }
}

ParamVector Mlp::init_params(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  ParamVector params = ParamVector::Zero(param_count_);
  for (const Layer& layer : layers_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index i = 0; i < layer.rows * layer.cols; ++i) params[layer.offset + i] = dist(rng);
  }
  return params;
}

namespace {

using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

ConstMatMap weights(const ParamVector& p, const Mlp::Layer& l) {
  return ConstMatMap(p.data() + l.offset, l.rows, l.cols);
}

ConstVecMap biases(const ParamVector& p, const Mlp::Layer& l) {
  return ConstVecMap(p.data() + l.offset + l.rows * l.cols, l.rows);
}

}  // namespace

ForwardCache Mlp::forward_loss(const ParamVector& params, const Batch& batch) const {
  check_params(params);
  if (batch.features.cols() != input_width()) {
    std::ostringstream msg;
    msg << "mlp: batch has " << batch.features.cols() << " features but the input layer expects "
        << input_width();
    throw std::invalid_argument(msg.str());
  }
  const Eigen::Index n = batch.features.rows();
  if (n == 0 || static_cast<std::size_t>(n) != batch.labels.size()) {
    throw std::invalid_argument("mlp: batch is empty or labels do not match rows");
  }

  ForwardCache cache;
  cache.labels = batch.labels;
  cache.inputs.push_back(batch.features);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = cache.inputs.back() * weights(params, layers_[l]).transpose();
    z.rowwise() += biases(params, layers_[l]).transpose();
    if (l + 1 < layers_.size()) cache.inputs.push_back(z.cwiseMax(0.0));
    cache.pre_activations.push_back(std::move(z));
  }

  const Eigen::MatrixXd& logits = cache.pre_activations.back();
  const Eigen::Index k = logits.cols();
  cache.probabilities.resize(n, k);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int label = batch.labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= k) throw std::invalid_argument("mlp: label outside the output range");
    const double top = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd shifted = logits.row(i).array() - top;
    const Eigen::RowVectorXd e = shifted.array().exp();
    const double sum = e.sum();
    cache.probabilities.row(i) = e / sum;
    total += std::log(sum) - shifted[label];
  }
  cache.loss = total / static_cast<double>(n);
  return cache;
}

ParamVector Mlp::backward(const ParamVector& params, const ForwardCache& cache) const {
  check_params(params);
  if (cache.pre_activations.size() != layers_.size()) throw std::logic_error("mlp: cache from a different model");
  const Eigen::Index n = cache.probabilities.rows();

  Eigen::MatrixXd dz = cache.probabilities;
  for (Eigen::Index i = 0; i < n; ++i) dz(i, cache.labels[static_cast<std::size_t>(i)]) -= 1.0;
  dz /= static_cast<double>(n);

  ParamVector grad(param_count_);
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Layer& layer = layers_[l];
    Eigen::Map<Eigen::MatrixXd>(grad.data() + layer.offset, layer.rows, layer.cols) =
        dz.transpose() * cache.inputs[l];
    Eigen::Map<Eigen::VectorXd>(grad.data() + layer.offset + layer.rows * layer.cols, layer.rows) =
        dz.colwise().sum().transpose();
    if (l > 0) {
      Eigen::MatrixXd da = dz * weights(params, layer);
      dz = (cache.pre_activations[l - 1].array() > 0.0).select(da, 0.0);
    }
  }
  return grad;
}

Eigen::MatrixXd Mlp::logits(const ParamVector& params, const Eigen::MatrixXd& features) const {
  check_params(params);
  Eigen::MatrixXd a = features;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = a * weights(params, layers_[l]).transpose();
    z.rowwise() += biases(params, layers_[l]).transpose();
    a = (l + 1 < layers_.size()) ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
  }
  return a;
}

double Mlp::accuracy(const ParamVector& params, const Dataset& data) const {
  const Eigen::MatrixXd out = logits(params, data.features);
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    Eigen::Index best = 0;
    out.row(i).maxCoeff(&best);
    if (best == data.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(out.rows());
}

double Mlp::mean_loss(const ParamVector& params, const Dataset& data) const {
  return forward_loss(params, full_batch(data)).loss;
}

std::vector<std::pair<Eigen::MatrixXd, Eigen::VectorXd>> Mlp::unflatten(const ParamVector& params) const {
  check_params(params);
  std::vector<std::pair<Eigen::MatrixXd, Eigen::VectorXd>> out;
  for (const Layer& layer : layers_) out.emplace_back(weights(params, layer), biases(params, layer));
  return out;
}

ParamVector Mlp::flatten(const std::vector<std::pair<Eigen::MatrixXd, Eigen::VectorXd>>& parts) const {
  if (parts.size() != layers_.size()) throw std::invalid_argument("mlp: wrong number of layers to flatten");
  ParamVector out(param_count_);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    const auto& [w, b] = parts[l];
    if (w.rows() != layer.rows || w.cols() != layer.cols || b.size() != layer.rows) {
      throw std::invalid_argument("mlp: layer shape mismatch while flattening");
    }
    Eigen::Map<Eigen::MatrixXd>(out.data() + layer.offset, layer.rows, layer.cols) = w;
    Eigen::Map<Eigen::VectorXd>(out.data() + layer.offset + layer.rows * layer.cols, layer.rows) = b;
  }
  return out;
}

}  // namespace qlabgrad::nn
