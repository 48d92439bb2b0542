#include "mcat/nets.hpp"

#include <cmath>

#include "mcat/error.hpp"
#include "mcat/rng.hpp"

namespace mcat {

Mlp::Mlp(std::vector<std::size_t> widths, std::uint64_t seed) : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw ContractError("an MLP needs at least input and output widths");
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const std::size_t in = widths_[l], out = widths_[l + 1];
    if (in == 0 || out == 0) throw ContractError("MLP widths must be positive");
    DenseLayer layer{Tensor::matrix(in, out), Tensor::matrix(1, out)};
    const double stddev = std::sqrt(2.0 / static_cast<double>(in));
    for (double& w : layer.weight.data()) w = rng.normal(0.0, stddev);
    layers_.push_back(std::move(layer));
  }
}

Mlp::Bound Mlp::bind(Tape& tape, bool trainable) const {
  Bound b;
  b.weights.reserve(layers_.size());
  b.biases.reserve(layers_.size());
  for (const auto& layer : layers_) {
    b.weights.push_back(tape.leaf(layer.weight, trainable));
    b.biases.push_back(tape.leaf(layer.bias, trainable));
  }
  return b;
}

Var Mlp::forward(const Bound& params, Var x) const {
  if (x.value().rank() != 2 || x.value().cols() != input_dim()) {
    throw DimensionError("MLP expects " + std::to_string(input_dim()) + " input columns, got shape " +
                         to_string(x.value().shape()));
  }
  Var h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    h = add_row(matmul(h, params.weights[l]), params.biases[l]);
    if (l + 1 < layers_.size()) h = relu(h);
  }
  return h;
}

Tensor Mlp::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != input_dim()) {
    throw DimensionError("MLP expects " + std::to_string(input_dim()) + " input columns, got shape " +
                         to_string(x.shape()));
  }
  check_finite(x, "MLP input");
  Tensor h = x;
  Tensor next;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    kernels::matmul(h, layers_[l].weight, next);
    const std::size_t n = next.rows(), m = next.cols();
    const bool hidden = l + 1 < layers_.size();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        double v = next.at(i, j) + layers_[l].bias[j];
        if (hidden && !(v > 0.0)) v = 0.0;
        next.at(i, j) = v;
      }
    }
    std::swap(h, next);
  }
  check_finite(h, "MLP output");
  return h;
}

std::vector<Tensor*> Mlp::parameters() {
  std::vector<Tensor*> out;
  for (auto& layer : layers_) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

std::vector<const Tensor*> Mlp::parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& layer : layers_) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

FeatureExtractor::FeatureExtractor(std::vector<std::size_t> widths, bool normalize, std::uint64_t seed_)
    : net(std::move(widths), seed_), normalize_output(normalize), seed(seed_) {}

Var FeatureExtractor::forward(const Mlp::Bound& params, Var x) const {
  Var h = net.forward(params, x);
  return normalize_output ? normalize_rows(h) : h;
}

Tensor pre_features(const FeatureExtractor& fe, const Tensor& x) { return fe.net.forward(x); }

Tensor features(const FeatureExtractor& fe, const Tensor& x) {
  Tensor h = fe.net.forward(x);
  if (!fe.normalize_output) return h;
  const std::size_t n = h.rows();
  for (std::size_t i = 0; i < n; ++i) {
    auto r = h.row(i);
    double acc = 0.0;
    for (double v : r) acc += v * v;
    const double norm = std::sqrt(acc);
    if (norm == 0.0) throw NumericError("feature row " + std::to_string(i) + " has zero norm");
    for (double& v : r) v /= norm;
  }
  return h;
}

LinearClassifier::LinearClassifier(std::size_t classes, std::size_t feature_dim, bool normalize, std::uint64_t seed)
    : weight(Tensor::matrix(classes, feature_dim)), normalize_rows(normalize) {
  Rng rng(seed);
  const double stddev = std::sqrt(2.0 / static_cast<double>(feature_dim));
  for (double& w : weight.data()) w = rng.normal(0.0, stddev);
}

Tensor LinearClassifier::effective_weight() const {
  if (!normalize_rows) return weight;
  Tensor w = weight;
  for (std::size_t k = 0; k < w.rows(); ++k) {
    auto r = w.row(k);
    double acc = 0.0;
    for (double v : r) acc += v * v;
    const double norm = std::sqrt(acc);
    if (norm == 0.0) throw NumericError("classifier row " + std::to_string(k) + " has zero norm");
    for (double& v : r) v /= norm;
  }
  return w;
}

Var LinearClassifier::forward(Var weight_var, Var u) const {
  if (u.value().rank() != 2 || u.value().cols() != feature_dim()) {
    throw DimensionError("classifier expects " + std::to_string(feature_dim()) + " feature columns, got shape " +
                         to_string(u.value().shape()));
  }
  Var w = normalize_rows ? mcat::normalize_rows(weight_var) : weight_var;
  return matmul(u, transpose(w));
}

Tensor logits(const LinearClassifier& clf, const Tensor& u) {
  if (u.rank() != 2 || u.cols() != clf.feature_dim()) {
    throw DimensionError("classifier expects " + std::to_string(clf.feature_dim()) +
                         " feature columns, got shape " + to_string(u.shape()));
  }
  Tensor out;
  kernels::matmul_bt(u, clf.effective_weight(), out);
  return out;
}

Generator::Generator(int class_id, std::vector<std::size_t> widths, std::uint64_t seed)
    : class_id_(class_id), net_(std::move(widths), seed) {}

Mlp& Generator::mutable_net() {
  if (frozen_) throw ContractError("generator for class " + std::to_string(class_id_) + " is frozen");
  return net_;
}

Tensor generate(const Generator& g, const Tensor& z) { return g.net().forward(z); }

Var generate(const Generator& g, const Mlp::Bound& params, Var z) { return g.net().forward(params, z); }

ModelBundle make_model(const ModelShape& shape, std::uint64_t seed) {
  std::vector<std::size_t> widths{shape.input_dim};
  widths.insert(widths.end(), shape.hidden.begin(), shape.hidden.end());
  widths.push_back(shape.feature_dim);
  ModelBundle model;
  model.extractor = FeatureExtractor(widths, shape.normalize_output, mix_seed({seed, 1}));
  model.classifier =
      LinearClassifier(shape.num_classes, shape.feature_dim, shape.normalize_rows, mix_seed({seed, 2}));
  model.logit_scale = shape.logit_scale;
  return model;
}

BoundModel bind_model(Tape& tape, const ModelBundle& model, bool trainable) {
  BoundModel b;
  b.extractor = model.extractor.net.bind(tape, trainable);
  b.classifier_weight = tape.leaf(model.classifier.weight, trainable);
  return b;
}

Var model_scores(const ModelBundle& model, const BoundModel& bound, Var feats) {
  Var s = model.classifier.forward(bound.classifier_weight, feats);
  return model.logit_scale == 1.0 ? s : scale(s, model.logit_scale);
}

std::vector<int> predict(const ModelBundle& model, const Tensor& x) {
  Tensor s = logits(model.classifier, features(model.extractor, x));
  std::vector<int> out(s.rows());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    auto r = s.row(i);
    std::size_t best = 0;
    for (std::size_t k = 1; k < r.size(); ++k) {
      if (r[k] > r[best]) best = k;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

}  // namespace mcat
