#pragma once

#include <cstdint>
#include <vector>

#include "mcat/ops.hpp"
#include "mcat/tape.hpp"
#include "mcat/tensor.hpp"

namespace mcat {

/// Fully connected layer computing x * weight + bias for row-vector batches.
struct DenseLayer {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out
};

/// Multilayer perceptron: ReLU after every layer except the last.
class Mlp {
 public:
  /// Parameters of one forward pass as recorded on a tape.
  struct Bound {
    std::vector<Var> weights;
    std::vector<Var> biases;
  };

  Mlp() = default;
  /// He (fan-in) normal weights, zero biases.
  Mlp(std::vector<std::size_t> widths, std::uint64_t seed);

  const std::vector<std::size_t>& widths() const noexcept { return widths_; }
  std::size_t input_dim() const { return widths_.front(); }
  std::size_t output_dim() const { return widths_.back(); }

  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

  Bound bind(Tape& tape, bool trainable) const;
  Var forward(const Bound& params, Var x) const;
  Tensor forward(const Tensor& x) const;

  /// Parameter tensors in declaration order (w0, b0, w1, b1, ...).
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;

 private:
  std::vector<std::size_t> widths_;
  std::vector<DenseLayer> layers_;
};

/// phi: R^d -> R^m, optionally projected onto the unit sphere.
struct FeatureExtractor {
  Mlp net;
  bool normalize_output = false;
  std::uint64_t seed = 0;

  FeatureExtractor() = default;
  FeatureExtractor(std::vector<std::size_t> widths, bool normalize, std::uint64_t seed);

  std::size_t input_dim() const { return net.input_dim(); }
  std::size_t feature_dim() const { return net.output_dim(); }

  Var forward(const Mlp::Bound& params, Var x) const;
};

/// Batch of feature vectors (n x m) for inputs x (n x d).
Tensor features(const FeatureExtractor& fe, const Tensor& x);
/// Features before the optional normalisation.
Tensor pre_features(const FeatureExtractor& fe, const Tensor& x);

/// W in R^{C x m}; row k is the class-k weight vector w_k.
struct LinearClassifier {
  Tensor weight;
  bool normalize_rows = false;

  LinearClassifier() = default;
  LinearClassifier(std::size_t classes, std::size_t feature_dim, bool normalize, std::uint64_t seed);

  std::size_t num_classes() const { return weight.rows(); }
  std::size_t feature_dim() const { return weight.cols(); }

  /// Rows of W as used for scoring (unit rows when normalize_rows).
  Tensor effective_weight() const;
  Var forward(Var weight_var, Var u) const;
};

/// s_k(u) = w_k . u for every row of u.
Tensor logits(const LinearClassifier& clf, const Tensor& u);

/// Class-conditional generator G_y: R^{d_z} -> R^{d_f}.
class Generator {
 public:
  Generator() = default;
  Generator(int class_id, std::vector<std::size_t> widths, std::uint64_t seed);

  int class_id() const noexcept { return class_id_; }
  std::size_t latent_dim() const { return net_.input_dim(); }
  std::size_t output_dim() const { return net_.output_dim(); }
  bool frozen() const noexcept { return frozen_; }
  void freeze() noexcept { frozen_ = true; }

  const Mlp& net() const noexcept { return net_; }
  /// Mutable access for updates; ContractError once frozen.
  Mlp& mutable_net();

 private:
  friend struct CheckpointAccess;
  int class_id_ = 0;
  Mlp net_;
  bool frozen_ = false;
};

/// Batch of generated features for latent codes z (n x d_z). Differentiable
/// in z through the tape overload regardless of the frozen flag.
Tensor generate(const Generator& g, const Tensor& z);
Var generate(const Generator& g, const Mlp::Bound& params, Var z);

/// Feature extractor, classifier and per-class generators.
struct ModelBundle {
  FeatureExtractor extractor;
  LinearClassifier classifier;
  std::vector<Generator> generators;
  /// Multiplies logits inside the training/attack loss; the certified margin
  /// always uses the raw logits.
  double logit_scale = 1.0;

  std::size_t num_classes() const { return classifier.num_classes(); }
  std::size_t input_dim() const { return extractor.input_dim(); }
  std::size_t feature_dim() const { return extractor.feature_dim(); }
  bool has_generators() const { return !generators.empty(); }
};

struct ModelShape {
  std::size_t input_dim = 16;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t feature_dim = 16;
  std::size_t num_classes = 10;
  bool normalize_output = false;
  bool normalize_rows = false;
  double logit_scale = 1.0;
};

/// Fresh extractor and classifier (no generators) seeded from `seed`.
ModelBundle make_model(const ModelShape& shape, std::uint64_t seed);

/// A model's parameters recorded on a tape.
struct BoundModel {
  Mlp::Bound extractor;
  Var classifier_weight;
};

BoundModel bind_model(Tape& tape, const ModelBundle& model, bool trainable);
/// Scaled logits (logit_scale * W phi(x)) for the loss.
Var model_scores(const ModelBundle& model, const BoundModel& bound, Var features);

/// Argmax of raw logits per row.
std::vector<int> predict(const ModelBundle& model, const Tensor& x);

}  // namespace mcat
