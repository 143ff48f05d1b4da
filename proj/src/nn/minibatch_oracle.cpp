#include "qlabgrad/nn.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

namespace qlabgrad::nn {

MinibatchOracle::MinibatchOracle(Mlp model, std::shared_ptr<const Dataset> data, Eigen::Index batch_size,
                                 std::uint64_t epoch_seed)
    : LossOracle(model.param_count()),
      model_(std::move(model)),
      data_(std::move(data)),
      batch_size_(batch_size),
      epoch_seed_(epoch_seed) {
  if (!data_) throw std::invalid_argument("minibatch oracle: dataset is null");
  data_->validate();
  if (batch_size_ < 1 || batch_size_ > data_->size()) {
    std::ostringstream msg;
    msg << "minibatch oracle: batch size " << batch_size_ << " must be in [1, " << data_->size() << "]";
    throw std::invalid_argument(msg.str());
  }
  if (data_->feature_dim() != model_.input_width()) {
    throw std::invalid_argument("minibatch oracle: dataset feature width does not match the input layer");
  }
  if (data_->num_classes > model_.num_classes()) {
    throw std::invalid_argument("minibatch oracle: dataset has more classes than the output layer");
  }
  batches_per_epoch_ = data_->size() / batch_size_;
  start_epoch();
}

void MinibatchOracle::start_epoch() {
  order_.resize(static_cast<std::size_t>(data_->size()));
  std::iota(order_.begin(), order_.end(), Eigen::Index{0});
  if (batch_size_ < data_->size()) {
    std::seed_seq seq{static_cast<std::uint32_t>(epoch_seed_), static_cast<std::uint32_t>(epoch_seed_ >> 32),
                      static_cast<std::uint32_t>(epoch_), static_cast<std::uint32_t>(epoch_ >> 32)};
    std::mt19937_64 rng(seq);
    std::shuffle(order_.begin(), order_.end(), rng);
  }
  batch_index_ = 0;
  batch_ = make_batch(*data_, current_rows());
}

std::span<const Eigen::Index> MinibatchOracle::current_rows() const {
  const auto start = static_cast<std::size_t>(batch_index_ * batch_size_);
  return std::span<const Eigen::Index>(order_).subspan(start, static_cast<std::size_t>(batch_size_));
}

void MinibatchOracle::next_batch() {
  if (batch_size_ == data_->size()) return;
  ++batch_index_;
  if (batch_index_ >= batches_per_epoch_) {
    ++epoch_;
    start_epoch();
    return;
  }
  batch_ = make_batch(*data_, current_rows());
}

GradEval MinibatchOracle::compute_full(const ParamVector& theta) const {
  const ForwardCache cache = model_.forward_loss(theta, batch_);
  return {cache.loss, model_.backward(theta, cache)};
}

double MinibatchOracle::compute_loss(const ParamVector& theta) const {
  return model_.forward_loss(theta, batch_).loss;
}

MinibatchOracle make_minibatch_oracle(const Mlp& model, std::shared_ptr<const Dataset> data,
                                      Eigen::Index batch_size, std::uint64_t epoch_seed) {
  return MinibatchOracle(model, std::move(data), batch_size, epoch_seed);
}

}  // namespace qlabgrad::nn
