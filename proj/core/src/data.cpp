#include "mcat/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <numeric>

#include "mcat/error.hpp"
#include "mcat/io.hpp"
#include "mcat/rng.hpp"

namespace mcat {

const char* to_string(Group g) noexcept {
  switch (g) {
    case Group::head: return "head";
    case Group::medium: return "medium";
    case Group::tail: return "tail";
  }
  return "?";
}

const char* to_string(Split s) noexcept { return s == Split::train ? "train" : "test"; }

std::vector<std::size_t> LongTailDataset::indices_of_class(int c) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == c) out.push_back(i);
  }
  return out;
}

LongTailDataset make_dataset(Tensor x, std::vector<int> y, std::size_t num_classes, Split split) {
  if (x.rank() != 2 || x.rows() != y.size()) throw DimensionError("dataset: sample and label counts differ");
  LongTailDataset d;
  d.x = std::move(x);
  d.y = std::move(y);
  d.split = split;
  d.counts.assign(num_classes, 0);
  for (int label : d.y) {
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
      throw DataError("label " + std::to_string(label) + " outside [0, " + std::to_string(num_classes) + ")");
    }
    ++d.counts[static_cast<std::size_t>(label)];
  }
  const double n = static_cast<double>(d.y.size());
  d.class_prior.resize(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) d.class_prior[c] = n > 0 ? static_cast<double>(d.counts[c]) / n : 0.0;
  d.groups = assign_groups(d.counts);
  return d;
}

std::vector<std::size_t> class_counts(std::size_t n_max, double ir, std::size_t classes) {
  if (classes < 2) throw ConfigError("need at least two classes", "data.C");
  if (!(ir >= 1.0)) throw ConfigError("imbalance ratio must be >= 1", "data.ir");
  if (n_max < 1) throw ConfigError("n_max must be positive", "data.n_max");
  std::vector<std::size_t> counts(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    const double e = -static_cast<double>(c) / static_cast<double>(classes - 1);
    counts[c] = static_cast<std::size_t>(std::llround(static_cast<double>(n_max) * std::pow(ir, e)));
  }
  counts.back() = std::max<std::size_t>(counts.back(), 1);
  return counts;
}

std::vector<Group> assign_groups(std::span<const std::size_t> counts) {
  const std::size_t c = counts.size();
  std::vector<std::size_t> order(c);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });

  std::vector<Group> groups(c, Group::tail);
  if (c == 0) return groups;
  if (c < 3) {
    // head gets the larger half
    const std::size_t head = (c + 1) / 2;
    for (std::size_t r = 0; r < c; ++r) groups[order[r]] = r < head ? Group::head : Group::tail;
    return groups;
  }
  const std::size_t base = c / 3, rem = c % 3;
  const std::size_t head = base + (rem > 0 ? 1 : 0);
  const std::size_t medium = base + (rem > 1 ? 1 : 0);
  for (std::size_t r = 0; r < c; ++r) {
    groups[order[r]] = r < head ? Group::head : (r < head + medium ? Group::medium : Group::tail);
  }
  return groups;
}

ClassCurves::ClassCurves(std::uint64_t seed, std::size_t classes, std::size_t dim, double amplitude,
                         double center_lo, double center_hi, std::size_t harmonics)
    : dim_(dim), harmonics_(harmonics) {
  if (dim < 2) throw ConfigError("synthetic data needs d >= 2", "data.d");
  Rng rng(mix_seed({seed, 0xC0B5E5ULL}));
  centers_.resize(classes);
  coeffs_.resize(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    centers_[c].resize(dim);
    for (double& v : centers_[c]) v = rng.uniform(center_lo, center_hi);
    for (std::size_t k = 1; k <= harmonics; ++k) {
      const double a = amplitude / static_cast<double>(k);
      std::vector<double> cs(dim), sn(dim);
      for (double& v : cs) v = rng.normal(0.0, a);
      for (double& v : sn) v = rng.normal(0.0, a);
      coeffs_[c].emplace_back(std::move(cs), std::move(sn));
    }
  }
}

std::vector<double> ClassCurves::point(int cls, double t) const {
  const auto c = static_cast<std::size_t>(cls);
  std::vector<double> p = centers_.at(c);
  for (std::size_t k = 1; k <= harmonics_; ++k) {
    const double ck = std::cos(static_cast<double>(k) * t);
    const double sk = std::sin(static_cast<double>(k) * t);
    const auto& [cs, sn] = coeffs_[c][k - 1];
    for (std::size_t j = 0; j < dim_; ++j) p[j] += ck * cs[j] + sk * sn[j];
  }
  return p;
}

LongTailDataset synth_dataset(const SynthOptions& opt) {
  const std::size_t classes = opt.counts.size();
  if (classes < 1) throw ConfigError("no class counts given", "data.C");
  ClassCurves curves(opt.seed, classes, opt.dim, opt.amplitude, opt.center_lo, opt.center_hi);
  const std::size_t n = std::accumulate(opt.counts.begin(), opt.counts.end(), std::size_t{0});
  Tensor x = Tensor::matrix(n, opt.dim);
  std::vector<int> y;
  y.reserve(n);
  std::size_t row = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < opt.counts[c]; ++i, ++row) {
      Rng rng(mix_seed({opt.seed, static_cast<std::uint64_t>(opt.split) + 1, c, i}));
      const double t = rng.uniform(0.0, 2.0 * std::numbers::pi);
      auto p = curves.point(static_cast<int>(c), t);
      auto dst = x.row(row);
      for (std::size_t j = 0; j < opt.dim; ++j) {
        dst[j] = p[j] + (opt.noise_sigma > 0.0 ? rng.normal(0.0, opt.noise_sigma) : 0.0);
      }
      y.push_back(static_cast<int>(c));
    }
  }
  return make_dataset(std::move(x), std::move(y), classes, opt.split);
}

std::string dataset_to_csv(const LongTailDataset& data) {
  std::string out;
  const std::size_t d = data.dim();
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto r = data.x.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      out += format_double(r[j]);
      out += ',';
    }
    out += std::to_string(data.y[i]);
    out += '\n';
  }
  return out;
}

LongTailDataset parse_dataset_csv(std::string_view text, std::optional<std::size_t> num_classes, Split split) {
  CsvDocument doc = parse_csv(text, false);
  if (doc.rows.empty()) throw FormatError("dataset CSV has no rows");
  const std::size_t width = doc.rows.front().size();
  if (width < 2) throw FormatError("dataset CSV needs at least one feature column and a label", 1);
  const std::size_t d = width - 1;
  Tensor x = Tensor::matrix(doc.rows.size(), d);
  std::vector<int> y(doc.rows.size());
  int max_label = -1;
  for (std::size_t i = 0; i < doc.rows.size(); ++i) {
    const auto& cells = doc.rows[i];
    for (std::size_t j = 0; j < d; ++j) {
      const std::string& s = cells[j];
      double v = 0.0;
      auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw FormatError("column " + std::to_string(j + 1) + " is not a finite number: '" + s + "'", i + 1);
      }
      x.at(i, j) = v;
    }
    const std::string& s = cells[d];
    int label = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), label);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || label < 0) {
      throw FormatError("label is not a non-negative integer: '" + s + "'", i + 1);
    }
    if (num_classes && static_cast<std::size_t>(label) >= *num_classes) {
      throw FormatError("label " + std::to_string(label) + " >= C=" + std::to_string(*num_classes), i + 1);
    }
    y[i] = label;
    max_label = std::max(max_label, label);
  }
  const std::size_t classes = num_classes ? *num_classes : static_cast<std::size_t>(max_label + 1);
  return make_dataset(std::move(x), std::move(y), classes, split);
}

LongTailDataset load_csv(const std::filesystem::path& path, std::optional<std::size_t> num_classes, Split split) {
  return parse_dataset_csv(read_file(path), num_classes, split);
}

std::filesystem::path metadata_path(const std::filesystem::path& csv_path) {
  std::filesystem::path p = csv_path;
  p.replace_extension(".meta.json");
  return p;
}

void save_dataset(const std::filesystem::path& csv_path, const LongTailDataset& data, const nlohmann::json& extra) {
  nlohmann::json meta = extra;
  meta["split"] = to_string(data.split);
  meta["num_classes"] = data.num_classes();
  meta["dim"] = data.dim();
  meta["size"] = data.size();
  meta["counts"] = data.counts;
  std::vector<std::string> groups;
  for (Group g : data.groups) groups.emplace_back(to_string(g));
  meta["groups"] = groups;
  write_file_atomic(csv_path, dataset_to_csv(data));
  write_file_atomic(metadata_path(csv_path), meta.dump(2) + "\n");
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  // Fisher-Yates with our own index draw so the order does not depend on the
  // standard library's shuffle implementation.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace mcat
