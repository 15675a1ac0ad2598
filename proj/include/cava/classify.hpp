#pragma once

#include <cstdint>
#include <filesystem>
#include <variant>
#include <vector>

#include "cava/dataset.hpp"
#include "cava/types.hpp"

namespace cava {

/// Per-feature affine map to zero mean and unit variance on the fitting set.
/// Zero-variance features are floored (stddev 1e-8), so constants map to 0.
struct Standardizer {
  Vector mean;
  Vector stddev;

  static Standardizer fit(const Matrix& X);
  Matrix apply(const Matrix& X) const;
};

inline Standardizer standardize_fit(const Matrix& X) { return Standardizer::fit(X); }
inline Matrix standardize_apply(const Standardizer& s, const Matrix& X) {
  return s.apply(X);
}

enum class Activation { Relu, Tanh };

struct MlpConfig {
  std::vector<int> hidden = {64};
  Activation activation = Activation::Relu;
  double learning_rate = 1e-3;
  int epochs = 500;
  int batch_size = 32;
  double l2_penalty = 1e-4;
  std::uint64_t seed = 0;
  // adaptive-moment update constants
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

struct MlpModel {
  std::vector<Matrix> weights;  // layer l maps fan_in x fan_out
  std::vector<Vector> biases;
  Activation activation = Activation::Relu;
  Standardizer standardizer;

  Index input_dim() const { return weights.front().rows(); }
  Index class_count() const { return weights.back().cols(); }
};

struct MlpGradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
};

/// Softmax cross-entropy (mean over rows) plus (l2/2) * sum ||W||_F^2 on an
/// already-standardized input; fills analytic gradients when `grads` is set.
double mlp_loss_and_grad(const MlpModel& model, const Matrix& X_std,
                         const std::vector<Valence>& y, double l2_penalty,
                         MlpGradients* grads);

/// Deterministic mini-batch training (seeded init and shuffles). Fits the
/// standardizer on X internally; raises on single-class training sets.
MlpModel mlp_train(const Matrix& X, const std::vector<Valence>& y, const MlpConfig& cfg);

struct Prediction {
  std::vector<Valence> labels;
  Matrix probabilities;  // rows sum to 1; label = argmax, lowest index wins ties
};

Prediction mlp_predict(const MlpModel& model, const Matrix& X);

/// Versioned flat binary: shapes, then row-major f64 weights, biases, and
/// the standardizer.
void save_mlp(const std::filesystem::path& path, const MlpModel& model);
MlpModel load_mlp(const std::filesystem::path& path);

/// k-nearest neighbours on standardized features (fit on Xtr only), majority
/// vote; ties broken by the smaller summed distance, then lower class index.
std::vector<Valence> knn_predict(const Matrix& Xtr, const std::vector<Valence>& ytr,
                                 const Matrix& Xte, int k);

/// Gaussian naive Bayes with per-class/per-feature variances (floored at
/// 1e-9) and empirical class priors.
struct GnbModel {
  Standardizer standardizer;
  Matrix mean;       // class x feature
  Matrix var;        // class x feature
  Vector log_prior;  // -inf for classes absent at fit
};

GnbModel gnb_fit(const Matrix& X, const std::vector<Valence>& y);
std::vector<Valence> gnb_predict(const GnbModel& model, const Matrix& X);

struct KnnConfig {
  int k = 5;
};
struct GnbConfig {};

using ClassifierConfig = std::variant<MlpConfig, KnnConfig, GnbConfig>;

const char* classifier_name(const ClassifierConfig& cfg);

struct EvalReport {
  double accuracy = 0.0;        // pooled held-out accuracy, trace/sum of confusion
  double train_accuracy = 0.0;  // mean of per-fold training accuracies
  double macro_f1 = 0.0;
  Eigen::Matrix<std::int64_t, 3, 3> confusion =
      Eigen::Matrix<std::int64_t, 3, 3>::Zero();  // row = truth, col = predicted
  std::vector<double> per_fold;
};

/// Stratified k-fold cross validation. Per fold, the standardizer and model
/// see only the training split (fold model seeds derive from `seed`).
EvalReport cross_validate(const ClassifierConfig& cfg, const Matrix& X,
                          const std::vector<Valence>& y, int folds, std::uint64_t seed);

}  // namespace cava
