#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cava/types.hpp"

namespace cava {

enum class Expression { Happy, Sad, Surprise, Anger, Disgust, Fear, Neutral };
inline constexpr int kExpressionCount = 7;

enum class Valence { Positive = 0, Neutral = 1, Negative = 2 };
inline constexpr int kValenceCount = 3;

const char* to_string(Expression e);
const char* to_string(Valence v);
const char* expression_code(Expression e);  // two-letter JAFFE code

/// Total Expression -> Valence table, indexed by Expression.
using ValenceMap = std::array<Valence, kExpressionCount>;

/// Happy -> Positive; Neutral -> Neutral; everything else -> Negative.
ValenceMap default_valence_map();

inline Valence map_valence(Expression e, const ValenceMap& m) {
  return m[static_cast<std::size_t>(e)];
}

/// Parses the JAFFE convention subject.EXPRindex.id.ext, e.g. "KA.HA2.30.png".
/// The expression is the first two characters of the second dot token.
Expression parse_jaffe_label(std::string_view filename);

/// Two-letter code -> Expression (HA, SA, SU, AN, DI, FE, NE).
std::optional<Expression> expression_from_code(std::string_view code);
std::optional<Valence> valence_from_name(std::string_view name);

struct LabeledImage {
  Image image;
  Valence label;
};

struct SynthParams {
  double noise = 0.03;          // i.i.d. pixel noise amplitude
  double center_jitter = 0.05;  // stddev of per-sample bump displacement
  double amp_jitter = 0.25;     // log-normal spread of per-sample amplitude
  double width_jitter = 0.15;   // log-normal spread of per-sample bump width
};

/// Deterministic synthetic corpus: per class, a distinct mixture of smooth
/// Gaussian bumps with per-sample jitter, over a slowly varying background.
/// Produces 3*n_per_class images ordered (Positive, Neutral, Negative) per
/// index, pixel values clipped to [0,1].
std::vector<LabeledImage> synth_dataset(int n_per_class, int side, std::uint64_t seed,
                                        const SynthParams& params = {});

/// Feature matrix (rows = samples) with one valence label per row.
struct LabeledDataset {
  Matrix features;
  std::vector<Valence> labels;

  Index n() const { return features.rows(); }
  Index feature_dim() const { return features.cols(); }
};

struct FoldAssignment {
  int k = 0;
  std::vector<int> assignment;  // index -> fold id in [0, k)

  std::vector<int> fold_sizes() const;
  std::vector<int> fold_indices(int fold) const;
};

/// Seeded shuffle + round-robin deal. With labels, samples are shuffled
/// within each class and dealt in class order, so per-class counts per fold
/// differ by at most one while total fold sizes still differ by at most one.
FoldAssignment kfold_split(int n, int k, std::uint64_t seed,
                           const std::vector<Valence>* labels = nullptr);

struct DatasetEntry {
  std::filesystem::path path;
  Expression expression;
};

/// All JAFFE-convention-named PGM/PNG files in a directory, sorted by name.
std::vector<DatasetEntry> scan_dataset_dir(const std::filesystem::path& dir);

/// CSV manifest of (path, expression-code) rows; relative paths resolve
/// against the CSV's directory. A header row "path,expression" is optional.
std::vector<DatasetEntry> read_manifest_csv(const std::filesystem::path& csv);

}  // namespace cava
