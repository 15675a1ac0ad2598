#include "cava/classify.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <future>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "cava/image_io.hpp"
#include "cava/rng.hpp"

namespace cava {

Standardizer Standardizer::fit(const Matrix& X) {
  if (X.rows() < 1) throw std::invalid_argument("standardize_fit: empty matrix");
  Standardizer s;
  s.mean = X.colwise().mean().transpose();
  const Matrix centered = X.rowwise() - s.mean.transpose();
  s.stddev = (centered.array().square().colwise().sum() / static_cast<double>(X.rows()))
                 .sqrt()
                 .max(1e-8)
                 .matrix()
                 .transpose();
  return s;
}

Matrix Standardizer::apply(const Matrix& X) const {
  if (X.cols() != mean.size()) {
    throw std::invalid_argument("standardize_apply: feature count mismatch");
  }
  return (X.rowwise() - mean.transpose()).array().rowwise() /
         stddev.transpose().array();
}

void MlpConfig::validate() const {
  for (const int w : hidden) {
    if (w < 1) throw std::invalid_argument("mlp: hidden widths must be >= 1");
  }
  if (learning_rate <= 0) throw std::invalid_argument("mlp: learning_rate must be > 0");
  if (epochs < 1) throw std::invalid_argument("mlp: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("mlp: batch_size must be >= 1");
  if (l2_penalty < 0) throw std::invalid_argument("mlp: l2_penalty must be >= 0");
}

namespace {

Matrix activate(const Matrix& z, Activation act) {
  if (act == Activation::Relu) return z.array().max(0.0).matrix();
  return z.array().tanh().matrix();
}

Matrix activate_grad(const Matrix& z, Activation act) {
  if (act == Activation::Relu) {
    return (z.array() > 0.0).cast<double>().matrix();
  }
  return (1.0 - z.array().tanh().square()).matrix();
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p = logits;
  for (Index i = 0; i < p.rows(); ++i) {
    p.row(i).array() -= p.row(i).maxCoeff();
    p.row(i) = p.row(i).array().exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

Matrix one_hot(const std::vector<Valence>& y, Index classes) {
  Matrix Y = Matrix::Zero(static_cast<Index>(y.size()), classes);
  for (std::size_t i = 0; i < y.size(); ++i) {
    Y(static_cast<Index>(i), static_cast<Index>(y[i])) = 1.0;
  }
  return Y;
}

}  // namespace

double mlp_loss_and_grad(const MlpModel& model, const Matrix& X_std,
                         const std::vector<Valence>& y, double l2_penalty,
                         MlpGradients* grads) {
  const Index n = X_std.rows();
  const std::size_t layers = model.weights.size();
  if (static_cast<Index>(y.size()) != n) {
    throw std::invalid_argument("mlp loss: label count mismatch");
  }

  // forward, keeping pre-activations for the backward pass
  std::vector<Matrix> acts(layers + 1);
  std::vector<Matrix> zs(layers);
  acts[0] = X_std;
  for (std::size_t l = 0; l < layers; ++l) {
    zs[l] = (acts[l] * model.weights[l]).rowwise() + model.biases[l].transpose();
    acts[l + 1] = l + 1 < layers ? activate(zs[l], model.activation) : zs[l];
  }
  const Matrix P = softmax_rows(acts[layers]);

  double loss = 0.0;
  for (Index i = 0; i < n; ++i) {
    loss -= std::log(std::max(P(i, static_cast<Index>(y[static_cast<std::size_t>(i)])),
                              1e-300));
  }
  loss /= static_cast<double>(n);
  for (const auto& W : model.weights) loss += 0.5 * l2_penalty * W.squaredNorm();

  if (grads) {
    grads->weights.resize(layers);
    grads->biases.resize(layers);
    Matrix delta = (P - one_hot(y, P.cols())) / static_cast<double>(n);
    for (std::size_t l = layers; l-- > 0;) {
      grads->weights[l] = acts[l].transpose() * delta + l2_penalty * model.weights[l];
      grads->biases[l] = delta.colwise().sum().transpose();
      if (l > 0) {
        delta = (delta * model.weights[l].transpose()).array() *
                activate_grad(zs[l - 1], model.activation).array();
      }
    }
  }
  return loss;
}

MlpModel mlp_train(const Matrix& X, const std::vector<Valence>& y, const MlpConfig& cfg) {
  cfg.validate();
  const Index n = X.rows();
  if (n < 1 || static_cast<Index>(y.size()) != n) {
    throw std::invalid_argument("mlp_train: shape mismatch between X and y");
  }
  {
    std::array<int, kValenceCount> counts{};
    for (const Valence v : y) ++counts[static_cast<std::size_t>(v)];
    int present = 0;
    for (const int c : counts) present += c > 0;
    if (present < 2) throw std::invalid_argument("mlp_train: single-class training set");
  }

  MlpModel model;
  model.activation = cfg.activation;
  model.standardizer = Standardizer::fit(X);
  const Matrix Xs = model.standardizer.apply(X);

  std::vector<Index> dims;
  dims.push_back(X.cols());
  for (const int h : cfg.hidden) dims.push_back(h);
  dims.push_back(kValenceCount);

  Rng rng(derive_seed(cfg.seed, 0x11));
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Matrix W(dims[l], dims[l + 1]);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    for (Index r = 0; r < W.rows(); ++r) {
      for (Index c = 0; c < W.cols(); ++c) {
        W(r, c) = scale * (2.0 * rng.uniform() - 1.0);
      }
    }
    model.weights.push_back(std::move(W));
    model.biases.push_back(Vector::Zero(dims[l + 1]));
  }

  // adaptive-moment state
  const std::size_t layers = model.weights.size();
  std::vector<Matrix> mW(layers), vW(layers);
  std::vector<Vector> mB(layers), vB(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    mW[l] = Matrix::Zero(model.weights[l].rows(), model.weights[l].cols());
    vW[l] = mW[l];
    mB[l] = Vector::Zero(model.biases[l].size());
    vB[l] = mB[l];
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  long step = 0;
  MlpGradients grads;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, 0x1000 + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    for (Index start = 0; start < n; start += cfg.batch_size) {
      const Index bs = std::min<Index>(cfg.batch_size, n - start);
      Matrix Xb(bs, Xs.cols());
      std::vector<Valence> yb(static_cast<std::size_t>(bs));
      for (Index i = 0; i < bs; ++i) {
        const Index src = order[static_cast<std::size_t>(start + i)];
        Xb.row(i) = Xs.row(src);
        yb[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(src)];
      }
      mlp_loss_and_grad(model, Xb, yb, cfg.l2_penalty, &grads);

      ++step;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (std::size_t l = 0; l < layers; ++l) {
        mW[l] = cfg.beta1 * mW[l] + (1.0 - cfg.beta1) * grads.weights[l];
        vW[l] = cfg.beta2 * vW[l] +
                (1.0 - cfg.beta2) * grads.weights[l].array().square().matrix();
        model.weights[l].array() -=
            cfg.learning_rate * (mW[l].array() / bc1) /
            ((vW[l].array() / bc2).sqrt() + cfg.adam_eps);

        mB[l] = cfg.beta1 * mB[l] + (1.0 - cfg.beta1) * grads.biases[l];
        vB[l] = cfg.beta2 * vB[l] +
                (1.0 - cfg.beta2) * grads.biases[l].array().square().matrix();
        model.biases[l].array() -=
            cfg.learning_rate * (mB[l].array() / bc1) /
            ((vB[l].array() / bc2).sqrt() + cfg.adam_eps);
      }
    }
  }
  return model;
}

Prediction mlp_predict(const MlpModel& model, const Matrix& X) {
  if (X.cols() != model.input_dim()) {
    throw std::invalid_argument("mlp_predict: feature count " + std::to_string(X.cols()) +
                                " does not match input_dim " +
                                std::to_string(model.input_dim()));
  }
  Matrix a = model.standardizer.apply(X);
  const std::size_t layers = model.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix z = (a * model.weights[l]).rowwise() + model.biases[l].transpose();
    a = l + 1 < layers ? activate(z, model.activation) : std::move(z);
  }
  Prediction pred;
  pred.probabilities = softmax_rows(a);
  pred.labels.resize(static_cast<std::size_t>(X.rows()));
  for (Index i = 0; i < X.rows(); ++i) {
    Index best = 0;
    for (Index c = 1; c < pred.probabilities.cols(); ++c) {
      if (pred.probabilities(i, c) > pred.probabilities(i, best)) best = c;
    }
    pred.labels[static_cast<std::size_t>(i)] = static_cast<Valence>(best);
  }
  return pred;
}

namespace {

constexpr char kMlpMagic[8] = {'C', 'A', 'V', 'A', 'M', 'L', 'P', '1'};

template <typename T>
void put_le(std::vector<unsigned char>& out, T v) {
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    out.push_back(static_cast<unsigned char>(static_cast<std::uint64_t>(v) >> (8 * b)));
  }
}

void put_f64(std::vector<unsigned char>& out, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  put_le<std::uint64_t>(out, u);
}

struct Reader {
  const std::vector<unsigned char>& bytes;
  std::size_t pos = 0;
  std::string name;

  template <typename T>
  T get() {
    if (pos + sizeof(T) > bytes.size()) {
      throw std::runtime_error(name + ": truncated model file");
    }
    std::uint64_t v = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b) v |= std::uint64_t(bytes[pos + b]) << (8 * b);
    pos += sizeof(T);
    return static_cast<T>(v);
  }

  double get_f64() {
    const std::uint64_t u = get<std::uint64_t>();
    double v;
    std::memcpy(&v, &u, 8);
    return v;
  }
};

}  // namespace

void save_mlp(const std::filesystem::path& path, const MlpModel& model) {
  std::vector<unsigned char> out(kMlpMagic, kMlpMagic + 8);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.weights.size()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.weights.front().rows()));
  for (const auto& W : model.weights) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(W.cols()));
  }
  out.push_back(model.activation == Activation::Relu ? 0 : 1);
  for (const auto& W : model.weights) {
    for (Index r = 0; r < W.rows(); ++r) {
      for (Index c = 0; c < W.cols(); ++c) put_f64(out, W(r, c));
    }
  }
  for (const auto& b : model.biases) {
    for (Index i = 0; i < b.size(); ++i) put_f64(out, b[i]);
  }
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.standardizer.mean.size()));
  for (Index i = 0; i < model.standardizer.mean.size(); ++i) {
    put_f64(out, model.standardizer.mean[i]);
  }
  for (Index i = 0; i < model.standardizer.stddev.size(); ++i) {
    put_f64(out, model.standardizer.stddev[i]);
  }
  write_file_atomic(path, out.data(), out.size());
}

MlpModel load_mlp(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMlpMagic, 8) != 0) {
    throw std::runtime_error(path.string() + ": not a model file (bad magic)");
  }
  Reader rd{bytes, 8, path.string()};
  const auto layers = rd.get<std::uint32_t>();
  if (layers < 1 || layers > 64) throw std::runtime_error(path.string() + ": bad layer count");
  std::vector<Index> dims;
  dims.push_back(rd.get<std::uint32_t>());
  for (std::uint32_t l = 0; l < layers; ++l) dims.push_back(rd.get<std::uint32_t>());

  MlpModel model;
  model.activation = rd.get<std::uint8_t>() == 0 ? Activation::Relu : Activation::Tanh;
  for (std::uint32_t l = 0; l < layers; ++l) {
    Matrix W(dims[l], dims[l + 1]);
    for (Index r = 0; r < W.rows(); ++r) {
      for (Index c = 0; c < W.cols(); ++c) W(r, c) = rd.get_f64();
    }
    model.weights.push_back(std::move(W));
  }
  for (std::uint32_t l = 0; l < layers; ++l) {
    Vector b(dims[l + 1]);
    for (Index i = 0; i < b.size(); ++i) b[i] = rd.get_f64();
    model.biases.push_back(std::move(b));
  }
  const auto d = rd.get<std::uint32_t>();
  model.standardizer.mean.resize(d);
  model.standardizer.stddev.resize(d);
  for (std::uint32_t i = 0; i < d; ++i) model.standardizer.mean[i] = rd.get_f64();
  for (std::uint32_t i = 0; i < d; ++i) model.standardizer.stddev[i] = rd.get_f64();
  if (static_cast<Index>(d) != model.input_dim()) {
    throw std::runtime_error(path.string() + ": standardizer does not match input layer");
  }
  return model;
}

std::vector<Valence> knn_predict(const Matrix& Xtr, const std::vector<Valence>& ytr,
                                 const Matrix& Xte, int k) {
  const Index n = Xtr.rows();
  if (n < 1) throw std::invalid_argument("knn: empty training set");
  if (static_cast<Index>(ytr.size()) != n) {
    throw std::invalid_argument("knn: label count mismatch");
  }
  if (k < 1 || k > n) {
    throw std::invalid_argument("knn: k must be in [1, n], got " + std::to_string(k));
  }

  const Standardizer st = Standardizer::fit(Xtr);
  const Matrix A = st.apply(Xtr);
  const Matrix B = st.apply(Xte);

  std::vector<Valence> out(static_cast<std::size_t>(B.rows()));
  std::vector<Index> idx(static_cast<std::size_t>(n));
  for (Index q = 0; q < B.rows(); ++q) {
    const Vector d2 = (A.rowwise() - B.row(q)).rowwise().squaredNorm();
    std::iota(idx.begin(), idx.end(), Index{0});
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](Index a, Index b) {
      return d2[a] != d2[b] ? d2[a] < d2[b] : a < b;
    });

    std::array<int, kValenceCount> votes{};
    std::array<double, kValenceCount> dist_sum{};
    for (int t = 0; t < k; ++t) {
      const auto cls = static_cast<std::size_t>(ytr[static_cast<std::size_t>(idx[t])]);
      ++votes[cls];
      dist_sum[cls] += std::sqrt(std::max(0.0, d2[idx[t]]));
    }
    int best = 0;
    for (int c = 1; c < kValenceCount; ++c) {
      if (votes[c] > votes[best] ||
          (votes[c] == votes[best] && dist_sum[c] < dist_sum[best])) {
        best = c;
      }
    }
    out[static_cast<std::size_t>(q)] = static_cast<Valence>(best);
  }
  return out;
}

GnbModel gnb_fit(const Matrix& X, const std::vector<Valence>& y) {
  const Index n = X.rows();
  if (n < 1) throw std::invalid_argument("gnb_fit: empty training set");
  if (static_cast<Index>(y.size()) != n) {
    throw std::invalid_argument("gnb_fit: label count mismatch");
  }

  GnbModel m;
  m.standardizer = Standardizer::fit(X);
  const Matrix Xs = m.standardizer.apply(X);
  m.mean = Matrix::Zero(kValenceCount, X.cols());
  m.var = Matrix::Zero(kValenceCount, X.cols());
  m.log_prior = Vector::Constant(kValenceCount, -std::numeric_limits<double>::infinity());

  std::array<int, kValenceCount> counts{};
  for (const Valence v : y) ++counts[static_cast<std::size_t>(v)];

  for (int c = 0; c < kValenceCount; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) continue;  // never predicted
    const double nc = counts[static_cast<std::size_t>(c)];
    for (Index i = 0; i < n; ++i) {
      if (static_cast<int>(y[static_cast<std::size_t>(i)]) != c) continue;
      m.mean.row(c) += Xs.row(i);
    }
    m.mean.row(c) /= nc;
    for (Index i = 0; i < n; ++i) {
      if (static_cast<int>(y[static_cast<std::size_t>(i)]) != c) continue;
      m.var.row(c) += (Xs.row(i) - m.mean.row(c)).array().square().matrix();
    }
    m.var.row(c) /= nc;
    m.log_prior[c] = std::log(nc / static_cast<double>(n));
  }
  m.var = m.var.array().max(1e-9).matrix();
  return m;
}

std::vector<Valence> gnb_predict(const GnbModel& model, const Matrix& X) {
  const Matrix Xs = model.standardizer.apply(X);
  std::vector<Valence> out(static_cast<std::size_t>(X.rows()));
  for (Index i = 0; i < Xs.rows(); ++i) {
    double best_lp = -std::numeric_limits<double>::infinity();
    int best = 0;
    for (int c = 0; c < kValenceCount; ++c) {
      if (std::isinf(model.log_prior[c]) && model.log_prior[c] < 0) continue;
      double lp = model.log_prior[c];
      for (Index j = 0; j < Xs.cols(); ++j) {
        const double v = model.var(c, j);
        const double d = Xs(i, j) - model.mean(c, j);
        lp += -0.5 * std::log(2.0 * std::numbers::pi * v) - d * d / (2.0 * v);
      }
      if (lp > best_lp) {
        best_lp = lp;
        best = c;
      }
    }
    out[static_cast<std::size_t>(i)] = static_cast<Valence>(best);
  }
  return out;
}

const char* classifier_name(const ClassifierConfig& cfg) {
  if (std::holds_alternative<MlpConfig>(cfg)) return "mlp";
  if (std::holds_alternative<KnnConfig>(cfg)) return "knn";
  return "gnb";
}

namespace {

struct FoldOutcome {
  std::vector<int> test_indices;
  std::vector<Valence> predictions;
  double train_accuracy = 0.0;
};

double fraction_equal(const std::vector<Valence>& a, const std::vector<Valence>& b) {
  int hits = 0;
  for (std::size_t i = 0; i < a.size(); ++i) hits += a[i] == b[i];
  return a.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(a.size());
}

FoldOutcome run_fold(const ClassifierConfig& cfg, const Matrix& X,
                     const std::vector<Valence>& y, const FoldAssignment& folds, int fold,
                     std::uint64_t seed) {
  std::vector<int> train_idx, test_idx;
  for (int i = 0; i < static_cast<int>(folds.assignment.size()); ++i) {
    (folds.assignment[static_cast<std::size_t>(i)] == fold ? test_idx : train_idx)
        .push_back(i);
  }

  Matrix Xtr(static_cast<Index>(train_idx.size()), X.cols());
  Matrix Xte(static_cast<Index>(test_idx.size()), X.cols());
  std::vector<Valence> ytr(train_idx.size());
  for (std::size_t i = 0; i < train_idx.size(); ++i) {
    Xtr.row(static_cast<Index>(i)) = X.row(train_idx[i]);
    ytr[i] = y[static_cast<std::size_t>(train_idx[i])];
  }
  for (std::size_t i = 0; i < test_idx.size(); ++i) {
    Xte.row(static_cast<Index>(i)) = X.row(test_idx[i]);
  }

  FoldOutcome out;
  out.test_indices = test_idx;
  if (const auto* mlp = std::get_if<MlpConfig>(&cfg)) {
    MlpConfig fold_cfg = *mlp;
    fold_cfg.seed = derive_seed(seed, 0x4D4C50 + static_cast<std::uint64_t>(fold));
    const MlpModel model = mlp_train(Xtr, ytr, fold_cfg);
    out.predictions = mlp_predict(model, Xte).labels;
    out.train_accuracy = fraction_equal(mlp_predict(model, Xtr).labels, ytr);
  } else if (const auto* knn = std::get_if<KnnConfig>(&cfg)) {
    const int k = std::min<int>(knn->k, static_cast<int>(train_idx.size()));
    out.predictions = knn_predict(Xtr, ytr, Xte, k);
    out.train_accuracy = fraction_equal(knn_predict(Xtr, ytr, Xtr, k), ytr);
  } else {
    const GnbModel model = gnb_fit(Xtr, ytr);
    out.predictions = gnb_predict(model, Xte);
    out.train_accuracy = fraction_equal(gnb_predict(model, Xtr), ytr);
  }
  return out;
}

}  // namespace

EvalReport cross_validate(const ClassifierConfig& cfg, const Matrix& X,
                          const std::vector<Valence>& y, int folds, std::uint64_t seed) {
  const int n = static_cast<int>(X.rows());
  if (static_cast<int>(y.size()) != n) {
    throw std::invalid_argument("cross_validate: label count mismatch");
  }
  const FoldAssignment fa = kfold_split(n, folds, derive_seed(seed, 0xF01D), &y);

  // folds are independent; bounded parallelism keeps results deterministic
  std::vector<FoldOutcome> outcomes(static_cast<std::size_t>(folds));
  const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  for (int base = 0; base < folds; base += static_cast<int>(workers)) {
    std::vector<std::future<FoldOutcome>> futs;
    const int end = std::min(folds, base + static_cast<int>(workers));
    for (int f = base; f < end; ++f) {
      futs.push_back(std::async(std::launch::async, run_fold, std::cref(cfg), std::cref(X),
                                std::cref(y), std::cref(fa), f, seed));
    }
    for (int f = base; f < end; ++f) {
      outcomes[static_cast<std::size_t>(f)] = futs[static_cast<std::size_t>(f - base)].get();
    }
  }

  EvalReport report;
  double train_sum = 0.0;
  for (const auto& oc : outcomes) {
    int hits = 0;
    for (std::size_t i = 0; i < oc.test_indices.size(); ++i) {
      const auto truth = y[static_cast<std::size_t>(oc.test_indices[i])];
      const auto pred = oc.predictions[i];
      ++report.confusion(static_cast<Index>(truth), static_cast<Index>(pred));
      hits += truth == pred;
    }
    report.per_fold.push_back(oc.test_indices.empty()
                                  ? 0.0
                                  : static_cast<double>(hits) /
                                        static_cast<double>(oc.test_indices.size()));
    train_sum += oc.train_accuracy;
  }
  report.train_accuracy = train_sum / static_cast<double>(folds);

  const auto total = report.confusion.sum();
  report.accuracy =
      total > 0 ? static_cast<double>(report.confusion.trace()) / static_cast<double>(total)
                : 0.0;

  double f1_sum = 0.0;
  for (int c = 0; c < kValenceCount; ++c) {
    const double tp = static_cast<double>(report.confusion(c, c));
    const double fp = static_cast<double>(report.confusion.col(c).sum()) - tp;
    const double fn = static_cast<double>(report.confusion.row(c).sum()) - tp;
    f1_sum += (2.0 * tp) > 0.0 || (fp + fn) > 0.0 ? 2.0 * tp / (2.0 * tp + fp + fn) : 0.0;
  }
  report.macro_f1 = f1_sum / kValenceCount;
  return report;
}

}  // namespace cava
