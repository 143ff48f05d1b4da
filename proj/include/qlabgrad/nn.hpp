#pragma once

#include "qlabgrad/diffkit.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace qlabgrad::nn {

/// Fully connected ReLU network with a softmax cross-entropy head.
struct MlpSpec {
  /// input, hidden..., output (class count).
  std::vector<Eigen::Index> layer_widths;

  void validate() const;
};

enum class Split { train, test };

struct Dataset {
  Eigen::MatrixXd features;  ///< n × d, one sample per row
  std::vector<int> labels;
  int num_classes = 0;
  Split split = Split::train;

  Eigen::Index size() const noexcept { return features.rows(); }
  Eigen::Index feature_dim() const noexcept { return features.cols(); }
  void validate() const;
};

/// Rows of a dataset bound for one evaluation.
struct Batch {
  Eigen::MatrixXd features;
  std::vector<int> labels;
};

Batch make_batch(const Dataset& data, std::span<const Eigen::Index> rows);
Batch full_batch(const Dataset& data);

struct ForwardCache {
  double loss = 0.0;
  /// Post-activation inputs of every layer: inputs[0] is the batch, inputs[l] feeds layer l.
  std::vector<Eigen::MatrixXd> inputs;
  /// Pre-activations of every layer; the last entry holds the logits.
  std::vector<Eigen::MatrixXd> pre_activations;
  /// Softmax probabilities of the output layer.
  Eigen::MatrixXd probabilities;
  std::vector<int> labels;
};

/// Parameters are flattened layer by layer; within a layer the out × in weight
/// matrix comes first in column-major order, followed by the out biases.
class Mlp {
 public:
  explicit Mlp(MlpSpec spec);

  const MlpSpec& spec() const noexcept { return spec_; }
  Eigen::Index param_count() const noexcept { return param_count_; }
  std::size_t num_layers() const noexcept { return spec_.layer_widths.size() - 1; }
  Eigen::Index input_width() const { return spec_.layer_widths.front(); }
  Eigen::Index num_classes() const { return spec_.layer_widths.back(); }

  /// Weights uniform in ±√(6 / fan_in), biases zero.
  ParamVector init_params(std::uint64_t seed) const;

  /// Mean softmax cross-entropy over the batch, with max-logit subtraction.
  ForwardCache forward_loss(const ParamVector& params, const Batch& batch) const;
  /// Exact gradient of the batch-mean loss, flattened like the parameters.
  ParamVector backward(const ParamVector& params, const ForwardCache& cache) const;

  Eigen::MatrixXd logits(const ParamVector& params, const Eigen::MatrixXd& features) const;
  double accuracy(const ParamVector& params, const Dataset& data) const;
  double mean_loss(const ParamVector& params, const Dataset& data) const;

  struct Layer {
    Eigen::Index offset;  ///< start of the weight block in the flat vector
    Eigen::Index rows;    ///< output width
    Eigen::Index cols;    ///< input width
  };
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  /// Split the flat vector into per-layer (weight, bias) copies and back.
  std::vector<std::pair<Eigen::MatrixXd, Eigen::VectorXd>> unflatten(const ParamVector& params) const;
  ParamVector flatten(const std::vector<std::pair<Eigen::MatrixXd, Eigen::VectorXd>>& layers) const;

 private:
  void check_params(const ParamVector& params) const;

  MlpSpec spec_;
  std::vector<Layer> layers_;
  Eigen::Index param_count_ = 0;
};

class IdxError : public Error {
 public:
  IdxError(const std::string& what, std::uint64_t offset) : Error(what), offset(offset) {}
  std::uint64_t offset;
};

/// Reads an IDX image/label pair (plain or gzip-compressed). Pixels are scaled by 1/255.
Dataset load_idx(const std::filesystem::path& features_path, const std::filesystem::path& labels_path,
                 Split split = Split::train);

/// k Gaussian blobs with standard deviation `spread`. Class c is centred on the
/// unit vector e_c when d ≥ k, otherwise on c·e_0, so centres are at least one
/// unit apart and do not depend on the seed. Labels cycle 0..k−1.
Dataset synth_dataset(std::uint64_t seed, Eigen::Index n, Eigen::Index d, int k, double spread,
                      Split split = Split::train);

/// LossOracle over an MLP and a dataset with an explicit minibatch binding.
///
/// Each epoch visits a seeded permutation of the samples in consecutive
/// batches; a trailing partial batch is dropped. The binding only changes on
/// next_batch(), so eval_full and eval_loss within one binding evaluate the
/// same function of θ.
class MinibatchOracle final : public LossOracle {
 public:
  MinibatchOracle(Mlp model, std::shared_ptr<const Dataset> data, Eigen::Index batch_size,
                  std::uint64_t epoch_seed);

  void next_batch() override;
  bool is_stochastic() const override { return batch_size_ < data_->size(); }

  const Mlp& model() const noexcept { return model_; }
  const Dataset& dataset() const noexcept { return *data_; }
  Eigen::Index batch_size() const noexcept { return batch_size_; }
  std::uint64_t epoch() const noexcept { return epoch_; }
  Eigen::Index batch_index() const noexcept { return batch_index_; }
  std::span<const Eigen::Index> current_rows() const;

 protected:
  GradEval compute_full(const ParamVector& theta) const override;
  double compute_loss(const ParamVector& theta) const override;

 private:
  void start_epoch();

  Mlp model_;
  std::shared_ptr<const Dataset> data_;
  Eigen::Index batch_size_;
  std::uint64_t epoch_seed_;
  std::uint64_t epoch_ = 0;
  Eigen::Index batch_index_ = 0;
  Eigen::Index batches_per_epoch_ = 0;
  std::vector<Eigen::Index> order_;
  Batch batch_;
};

MinibatchOracle make_minibatch_oracle(const Mlp& model, std::shared_ptr<const Dataset> data,
                                      Eigen::Index batch_size, std::uint64_t epoch_seed);

}  // namespace qlabgrad::nn
