#include "mcat/manifold.hpp"

#include <cmath>

#include "mcat/error.hpp"
#include "mcat/optim.hpp"
#include "mcat/rng.hpp"

namespace mcat {

LatentCache::LatentCache(const LatentCache& other) : latent_dim_(other.latent_dim_), seed_(other.seed_) {
  std::lock_guard lock(other.mutex_);
  entries_ = other.entries_;
}

std::vector<double> seeded_latent(std::size_t latent_dim, std::uint64_t seed, std::size_t key) {
  Rng rng(mix_seed({seed, 0x1A7E47ULL, key}));
  std::vector<double> z(latent_dim);
  for (double& v : z) v = rng.normal();
  return z;
}

std::vector<double> LatentCache::warm_start(std::size_t key) const {
  if (auto hit = lookup(key)) return *std::move(hit);
  return seeded_latent(latent_dim_, seed_, key);
}

std::optional<std::vector<double>> LatentCache::lookup(std::size_t key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void LatentCache::store(std::size_t key, std::span<const double> z) {
  if (z.size() != latent_dim_) throw DimensionError("latent cache: wrong latent dimension");
  std::lock_guard lock(mutex_);
  entries_[key].assign(z.begin(), z.end());
}

std::size_t LatentCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

namespace {

struct LatentEval {
  std::vector<double> distance;
  Tensor grad;
  Tensor out;
};

LatentEval evaluate_latents(const Generator& g, const Tensor& u, const Tensor& z, bool need_grad) {
  Tape tape;
  auto params = g.net().bind(tape, false);
  Var zv = tape.leaf(z, need_grad);
  Var out = generate(g, params, zv);
  Var rs = row_sum_squares(sub(tape.constant(u), out));
  LatentEval e;
  e.distance.assign(rs.value().data().begin(), rs.value().data().end());
  e.out = out.value();
  if (need_grad) {
    tape.backward(sum(rs));
    e.grad = zv.grad();
  }
  return e;
}

void require_frozen(const Generator& g) {
  if (!g.frozen()) {
    throw ContractError("manifold distance needs a frozen generator (class " + std::to_string(g.class_id()) + ")");
  }
}

}  // namespace

LatentDescent latent_descent(const Generator& g, const Tensor& u, Tensor z0, const LatentSearch& search) {
  if (u.rank() != 2 || u.cols() != g.output_dim()) {
    throw DimensionError("feature batch has shape " + to_string(u.shape()) + ", generator emits " +
                         std::to_string(g.output_dim()) + " columns");
  }
  if (z0.rank() != 2 || z0.rows() != u.rows() || z0.cols() != g.latent_dim()) {
    throw DimensionError("latent batch has shape " + to_string(z0.shape()));
  }
  const std::size_t n = u.rows(), dz = z0.cols(), df = u.cols();
  LatentEval cur = evaluate_latents(g, u, z0, search.steps > 0);
  std::vector<double> lr(n, search.lr);
  LatentDescent res;
  res.steps_used.assign(n, 0);
  Tensor z = std::move(z0);
  Tensor cand = Tensor::matrix(n, dz);
  for (std::size_t s = 0; s < search.steps; ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < dz; ++j) cand.at(i, j) = z.at(i, j) - lr[i] * cur.grad.at(i, j);
    }
    const bool more = s + 1 < search.steps;
    LatentEval next = evaluate_latents(g, u, cand, more);
    for (std::size_t i = 0; i < n; ++i) {
      if (next.distance[i] <= cur.distance[i]) {
        cur.distance[i] = next.distance[i];
        for (std::size_t j = 0; j < dz; ++j) z.at(i, j) = cand.at(i, j);
        for (std::size_t j = 0; j < df; ++j) cur.out.at(i, j) = next.out.at(i, j);
        if (more) {
          for (std::size_t j = 0; j < dz; ++j) cur.grad.at(i, j) = next.grad.at(i, j);
        }
        ++res.steps_used[i];
      } else {
        lr[i] *= 0.5;
      }
    }
  }
  res.distance = std::move(cur.distance);
  res.z_star = std::move(z);
  res.anchors = std::move(cur.out);
  return res;
}

ManifoldDistanceResult manifold_distance(std::span<const double> u, const Generator& g, const LatentSearch& search,
                                         LatentCache& cache, std::size_t key) {
  require_frozen(g);
  if (u.size() != g.output_dim()) throw DimensionError("feature length does not match generator output");
  if (cache.latent_dim() != g.latent_dim()) throw DimensionError("latent cache dimension does not match generator");
  auto z0 = cache.warm_start(key);
  auto d = latent_descent(g, Tensor::row_vector(u), Tensor::row_vector(z0), search);
  ManifoldDistanceResult r;
  r.distance = d.distance[0];
  r.z_star.assign(d.z_star.data().begin(), d.z_star.data().end());
  r.steps_used = d.steps_used[0];
  cache.store(key, r.z_star);
  return r;
}

BatchDistance manifold_distance_batch(const Tensor& u, std::span<const int> labels, std::span<const std::size_t> keys,
                                      std::span<const Generator> generators, const LatentSearch& search,
                                      LatentCache& cache, bool update_cache) {
  const std::size_t n = u.rows();
  if (labels.size() != n || keys.size() != n) throw DimensionError("manifold batch: labels/keys do not match rows");
  BatchDistance out;
  out.distance.assign(n, 0.0);
  out.anchors = Tensor::matrix(n, u.cols());

  std::vector<std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    if (labels[i] < 0 || c >= generators.size()) {
      throw ConfigError("no generator for class " + std::to_string(labels[i]), "manifold");
    }
    if (by_class.size() <= c) by_class.resize(c + 1);
    by_class[c].push_back(i);
  }
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const auto& rows = by_class[c];
    if (rows.empty()) continue;
    const Generator& g = generators[c];
    require_frozen(g);
    if (cache.latent_dim() != g.latent_dim()) throw DimensionError("latent cache dimension does not match generator");
    Tensor uc = u.gather_rows(rows);
    Tensor z0 = Tensor::matrix(rows.size(), g.latent_dim());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      auto z = cache.warm_start(keys[rows[r]]);
      std::copy(z.begin(), z.end(), z0.row(r).begin());
    }
    auto d = latent_descent(g, uc, std::move(z0), search);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      out.distance[rows[r]] = d.distance[r];
      auto a = d.anchors.row(r);
      std::copy(a.begin(), a.end(), out.anchors.row(rows[r]).begin());
      if (update_cache) cache.store(keys[rows[r]], d.z_star.row(r));
    }
  }
  return out;
}

std::vector<double> manifold_distance_grad(std::span<const double> u, const Generator& g, const LatentSearch& search,
                                           LatentCache& cache, std::size_t key) {
  auto r = manifold_distance(u, g, search, cache, key);
  Tensor anchor = generate(g, Tensor::row_vector(r.z_star));
  std::vector<double> grad(u.size());
  for (std::size_t j = 0; j < u.size(); ++j) grad[j] = 2.0 * (u[j] - anchor[j]);
  return grad;
}

namespace {

double expected_loss(const Generator& g, const Tensor& feats, std::uint64_t seed) {
  constexpr std::size_t kDraws = 4;
  constexpr std::size_t kMaxRows = 256;
  const std::size_t n = std::min(feats.rows(), kMaxRows);
  Tensor z = Tensor::matrix(n * kDraws, g.latent_dim());
  Rng rng(seed);
  for (double& v : z.data()) v = rng.normal();
  Tensor out = generate(g, z);
  double total = 0.0;
  for (std::size_t i = 0; i < n * kDraws; ++i) {
    auto target = feats.row(i % n);
    auto o = out.row(i);
    for (std::size_t j = 0; j < o.size(); ++j) total += (o[j] - target[j]) * (o[j] - target[j]);
  }
  return total / static_cast<double>(n * kDraws);
}

}  // namespace

PretrainResult pretrain_generators(const std::vector<Tensor>& features_by_class, const PretrainOptions& opt) {
  PretrainResult res;
  for (std::size_t c = 0; c < features_by_class.size(); ++c) {
    const Tensor& feats = features_by_class[c];
    if (feats.rank() != 2 || feats.rows() == 0) {
      throw DataError("class " + std::to_string(c) + " has no features for generator pretraining");
    }
    std::vector<std::size_t> widths{opt.latent_dim};
    widths.insert(widths.end(), opt.hidden.begin(), opt.hidden.end());
    widths.push_back(feats.cols());
    Generator g(static_cast<int>(c), widths, mix_seed({opt.seed, c, 0x6E4ULL}));

    const std::uint64_t eval_seed = mix_seed({opt.seed, c, 0xE7A1ULL});
    res.initial_loss.push_back(expected_loss(g, feats, eval_seed));

    MomentumSgd sgd({opt.lr, opt.momentum, 0.0});
    Rng rng(mix_seed({opt.seed, c, 0x57E9ULL}));
    const std::size_t batch = std::max<std::size_t>(opt.batch, 1);
    for (std::size_t step = 0; step < opt.steps; ++step) {
      Tensor target = Tensor::matrix(batch, feats.cols());
      for (std::size_t i = 0; i < batch; ++i) {
        auto src = feats.row(static_cast<std::size_t>(rng.next() % feats.rows()));
        std::copy(src.begin(), src.end(), target.row(i).begin());
      }
      Tensor z = Tensor::matrix(batch, opt.latent_dim);
      for (double& v : z.data()) v = rng.normal();

      Tape tape;
      auto params = g.net().bind(tape, true);
      Var out = generate(g, params, tape.constant(std::move(z)));
      Var loss = scale(sum(row_sum_squares(sub(out, tape.constant(std::move(target))))),
                       1.0 / static_cast<double>(batch));
      tape.backward(loss);
      std::vector<const Tensor*> grads;
      for (std::size_t l = 0; l < params.weights.size(); ++l) {
        grads.push_back(&params.weights[l].grad());
        grads.push_back(&params.biases[l].grad());
      }
      sgd.step(g.mutable_net().parameters(), grads);
    }
    res.final_loss.push_back(expected_loss(g, feats, eval_seed));
    g.freeze();
    res.generators.push_back(std::move(g));
  }
  return res;
}

double reconstruction_error(const Generator& g, const Tensor& features, const LatentSearch& search,
                            LatentCache& cache, std::span<const std::size_t> keys) {
  require_frozen(g);
  if (features.rank() != 2 || features.rows() == 0) throw DataError("reconstruction error of an empty batch");
  if (keys.size() != features.rows()) throw DimensionError("reconstruction error: keys do not match rows");
  Tensor z0 = Tensor::matrix(features.rows(), g.latent_dim());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    auto z = cache.warm_start(keys[i]);
    std::copy(z.begin(), z.end(), z0.row(i).begin());
  }
  auto d = latent_descent(g, features, std::move(z0), search);
  double total = 0.0;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    cache.store(keys[i], d.z_star.row(i));
    total += std::sqrt(d.distance[i]);
  }
  return total / static_cast<double>(keys.size());
}

double reconstruction_error(const Generator& g, const Tensor& features, const LatentSearch& search,
                            std::uint64_t seed) {
  LatentCache cache(g.latent_dim(), seed);
  std::vector<std::size_t> keys(features.rank() == 2 ? features.rows() : 0);
  for (std::size_t i = 0; i < keys.size(); ++i) keys[i] = i;
  return reconstruction_error(g, features, search, cache, keys);
}

}  // namespace mcat
