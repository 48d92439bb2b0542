#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcat/tensor.hpp"

namespace mcat {

enum class Group { head, medium, tail };
enum class Split { train, test };

const char* to_string(Group g) noexcept;
const char* to_string(Split s) noexcept;

/// Labelled samples with per-class bookkeeping.
struct LongTailDataset {
  Tensor x;                          // n x d
  std::vector<int> y;                // n labels in [0, C)
  std::vector<std::size_t> counts;   // per-class sample counts
  std::vector<double> class_prior;   // counts / n
  std::vector<Group> groups;         // per-class frequency band
  Split split = Split::train;

  std::size_t size() const noexcept { return y.size(); }
  std::size_t num_classes() const noexcept { return counts.size(); }
  std::size_t dim() const { return x.cols(); }

  std::vector<std::size_t> indices_of_class(int c) const;
  Group group_of_sample(std::size_t i) const { return groups[static_cast<std::size_t>(y[i])]; }
};

/// Builds a dataset from raw samples, recomputing counts, prior and groups.
LongTailDataset make_dataset(Tensor x, std::vector<int> y, std::size_t num_classes, Split split);

/// Exponentially decaying class sizes: round(n_max * ir^(-c/(C-1))), with the
/// last class clamped to at least one sample. ConfigError when C < 2 or ir < 1.
std::vector<std::size_t> class_counts(std::size_t n_max, double ir, std::size_t classes);

/// Head/medium/tail as thirds of the frequency ranking; any remainder goes to
/// the earlier bands (C=10 -> 4/3/3). Fewer than three classes yields head and
/// tail only. Equal counts rank by class index, so ties lean toward the tail.
std::vector<Group> assign_groups(std::span<const std::size_t> counts);

/// Per-class smooth closed curve in R^d: centre plus a few random Fourier
/// harmonics of decreasing amplitude.
class ClassCurves {
 public:
  ClassCurves(std::uint64_t seed, std::size_t classes, std::size_t dim, double amplitude = 0.15,
              double center_lo = 0.2, double center_hi = 0.8, std::size_t harmonics = 2);

  std::vector<double> point(int cls, double t) const;
  std::size_t classes() const noexcept { return centers_.size(); }
  std::size_t dim() const noexcept { return dim_; }

 private:
  std::size_t dim_;
  std::size_t harmonics_;
  std::vector<std::vector<double>> centers_;
  // [class][harmonic] -> (cos coefficients, sin coefficients), each of length dim
  std::vector<std::vector<std::pair<std::vector<double>, std::vector<double>>>> coeffs_;
};

struct SynthOptions {
  std::uint64_t seed = 0;
  std::size_t dim = 16;
  std::vector<std::size_t> counts;
  double noise_sigma = 0.03;
  Split split = Split::train;
  double amplitude = 0.15;
  double center_lo = 0.2;
  double center_hi = 0.8;
};

/// Samples each class along its curve with isotropic Gaussian noise. The
/// curves depend only on (seed, C, d); the sample positions additionally on
/// the split, so train and test share class manifolds.
LongTailDataset synth_dataset(const SynthOptions& options);

/// CSV: d float columns then one integer label per line, no header.
std::string dataset_to_csv(const LongTailDataset& data);
/// `num_classes`, when given, bounds the labels; otherwise C = max label + 1.
LongTailDataset parse_dataset_csv(std::string_view text, std::optional<std::size_t> num_classes = std::nullopt,
                                  Split split = Split::train);
LongTailDataset load_csv(const std::filesystem::path& path, std::optional<std::size_t> num_classes = std::nullopt,
                         Split split = Split::train);

/// Sidecar metadata path for a dataset CSV: foo.csv -> foo.meta.json.
std::filesystem::path metadata_path(const std::filesystem::path& csv_path);

/// Writes the CSV and its metadata sidecar (counts, groups, split plus `extra`).
void save_dataset(const std::filesystem::path& csv_path, const LongTailDataset& data,
                  const nlohmann::json& extra = nlohmann::json::object());

/// Deterministic permutation of [0, n).
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

}  // namespace mcat
