#include "cava/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "cava/rng.hpp"

namespace cava {

const char* to_string(Expression e) {
  switch (e) {
    case Expression::Happy: return "happy";
    case Expression::Sad: return "sad";
    case Expression::Surprise: return "surprise";
    case Expression::Anger: return "anger";
    case Expression::Disgust: return "disgust";
    case Expression::Fear: return "fear";
    case Expression::Neutral: return "neutral";
  }
  return "?";
}

const char* to_string(Valence v) {
  switch (v) {
    case Valence::Positive: return "positive";
    case Valence::Neutral: return "neutral";
    case Valence::Negative: return "negative";
  }
  return "?";
}

const char* expression_code(Expression e) {
  switch (e) {
    case Expression::Happy: return "HA";
    case Expression::Sad: return "SA";
    case Expression::Surprise: return "SU";
    case Expression::Anger: return "AN";
    case Expression::Disgust: return "DI";
    case Expression::Fear: return "FE";
    case Expression::Neutral: return "NE";
  }
  return "??";
}

ValenceMap default_valence_map() {
  ValenceMap m{};
  m[static_cast<std::size_t>(Expression::Happy)] = Valence::Positive;
  m[static_cast<std::size_t>(Expression::Neutral)] = Valence::Neutral;
  m[static_cast<std::size_t>(Expression::Sad)] = Valence::Negative;
  m[static_cast<std::size_t>(Expression::Anger)] = Valence::Negative;
  m[static_cast<std::size_t>(Expression::Disgust)] = Valence::Negative;
  m[static_cast<std::size_t>(Expression::Fear)] = Valence::Negative;
  m[static_cast<std::size_t>(Expression::Surprise)] = Valence::Negative;
  return m;
}

std::optional<Expression> expression_from_code(std::string_view code) {
  if (code == "HA") return Expression::Happy;
  if (code == "SA") return Expression::Sad;
  if (code == "SU") return Expression::Surprise;
  if (code == "AN") return Expression::Anger;
  if (code == "DI") return Expression::Disgust;
  if (code == "FE") return Expression::Fear;
  if (code == "NE") return Expression::Neutral;
  return std::nullopt;
}

std::optional<Valence> valence_from_name(std::string_view name) {
  if (name == "positive") return Valence::Positive;
  if (name == "neutral") return Valence::Neutral;
  if (name == "negative") return Valence::Negative;
  return std::nullopt;
}

Expression parse_jaffe_label(std::string_view filename) {
  // strip any directory part
  const auto slash = filename.find_last_of("/\\");
  if (slash != std::string_view::npos) filename = filename.substr(slash + 1);

  const auto dot1 = filename.find('.');
  if (dot1 == std::string_view::npos) {
    throw std::runtime_error("malformed dataset filename '" + std::string(filename) +
                             "' (expected subject.EXPRindex.id.ext)");
  }
  const auto second = filename.substr(dot1 + 1);
  if (second.size() < 2) {
    throw std::runtime_error("malformed dataset filename '" + std::string(filename) +
                             "' (expression token too short)");
  }
  const auto expr = expression_from_code(second.substr(0, 2));
  if (!expr) {
    throw std::runtime_error("unknown expression code '" + std::string(second.substr(0, 2)) +
                             "' in '" + std::string(filename) + "'");
  }
  return *expr;
}

namespace {

struct Bump {
  double cy, cx, sigma, amp;
};

// Class templates: spatially distinct bump layouts with (approximately)
// equal total mass, so no single projection separates classes by brightness
// alone. amp * sigma^2 * count is held near-constant across classes.
std::vector<Bump> class_bumps(Valence v) {
  switch (v) {
    case Valence::Positive:  // main-diagonal pair
      return {{0.32, 0.32, 0.10, 0.55}, {0.68, 0.68, 0.10, 0.55}};
    case Valence::Neutral:  // single broad center blob
      return {{0.50, 0.50, 0.16, 0.43}};
    case Valence::Negative:  // anti-diagonal pair
      return {{0.32, 0.68, 0.10, 0.55}, {0.68, 0.32, 0.10, 0.55}};
  }
  return {};
}

}  // namespace

std::vector<LabeledImage> synth_dataset(int n_per_class, int side, std::uint64_t seed,
                                        const SynthParams& params) {
  if (n_per_class < 1) throw std::invalid_argument("synth_dataset: n_per_class must be >= 1");
  if (!is_power_of_two(side)) {
    throw std::invalid_argument("synth_dataset: side must be a power of two, got " +
                                std::to_string(side));
  }

  std::vector<LabeledImage> out;
  out.reserve(static_cast<std::size_t>(3 * n_per_class));
  for (int i = 0; i < n_per_class; ++i) {
    for (int cls = 0; cls < kValenceCount; ++cls) {
      const auto label = static_cast<Valence>(cls);
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i) * kValenceCount +
                                    static_cast<std::uint64_t>(cls)));

      auto bumps = class_bumps(label);
      const double global_amp = std::exp(params.amp_jitter * rng.normal());
      for (auto& b : bumps) {
        b.cy += params.center_jitter * rng.normal();
        b.cx += params.center_jitter * rng.normal();
        b.sigma *= std::exp(params.width_jitter * rng.normal());
        b.amp *= global_amp * std::exp(0.5 * params.amp_jitter * rng.normal());
      }
      const double bg = 0.25 + 0.02 * rng.normal();
      const double gy = 0.05 * rng.normal();
      const double gx = 0.05 * rng.normal();

      Image img(side, side);
      for (int r = 0; r < side; ++r) {
        const double v = (r + 0.5) / side;
        for (int c = 0; c < side; ++c) {
          const double u = (c + 0.5) / side;
          double val = bg + gy * (v - 0.5) + gx * (u - 0.5);
          for (const auto& b : bumps) {
            const double dy = v - b.cy;
            const double dx = u - b.cx;
            val += b.amp * std::exp(-(dy * dy + dx * dx) / (2.0 * b.sigma * b.sigma));
          }
          img(r, c) = val;
        }
      }
      if (params.noise > 0) {
        for (int r = 0; r < side; ++r)
          for (int c = 0; c < side; ++c) img(r, c) += params.noise * rng.normal();
      }
      img = img.array().min(1.0).max(0.0);
      out.push_back({std::move(img), label});
    }
  }
  return out;
}

std::vector<int> FoldAssignment::fold_sizes() const {
  std::vector<int> sizes(static_cast<std::size_t>(k), 0);
  for (const int f : assignment) ++sizes[static_cast<std::size_t>(f)];
  return sizes;
}

std::vector<int> FoldAssignment::fold_indices(int fold) const {
  std::vector<int> idx;
  for (int i = 0; i < static_cast<int>(assignment.size()); ++i) {
    if (assignment[static_cast<std::size_t>(i)] == fold) idx.push_back(i);
  }
  return idx;
}

FoldAssignment kfold_split(int n, int k, std::uint64_t seed,
                           const std::vector<Valence>* labels) {
  if (k < 2) throw std::invalid_argument("kfold_split: k must be >= 2, got " + std::to_string(k));
  if (k > n) {
    throw std::invalid_argument("kfold_split: k (" + std::to_string(k) +
                                ") exceeds sample count (" + std::to_string(n) + ")");
  }
  if (labels && static_cast<int>(labels->size()) != n) {
    throw std::invalid_argument("kfold_split: labels length does not match n");
  }

  Rng rng(seed);
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(n));
  if (!labels) {
    order.resize(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
  } else {
    // shuffle within each class, then concatenate in class order; the
    // round-robin deal below then balances classes and totals simultaneously
    for (int cls = 0; cls < kValenceCount; ++cls) {
      std::vector<int> members;
      for (int i = 0; i < n; ++i) {
        if ((*labels)[static_cast<std::size_t>(i)] == static_cast<Valence>(cls)) {
          members.push_back(i);
        }
      }
      rng.shuffle(members);
      order.insert(order.end(), members.begin(), members.end());
    }
  }

  FoldAssignment fa;
  fa.k = k;
  fa.assignment.resize(static_cast<std::size_t>(n));
  for (int p = 0; p < n; ++p) {
    fa.assignment[static_cast<std::size_t>(order[static_cast<std::size_t>(p)])] = p % k;
  }
  return fa;
}

std::vector<DatasetEntry> scan_dataset_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error(dir.string() + ": not a directory");
  }
  std::vector<DatasetEntry> entries;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension().string();
    if (ext != ".pgm" && ext != ".png" && ext != ".PGM" && ext != ".PNG") continue;
    entries.push_back({e.path(), parse_jaffe_label(e.path().filename().string())});
  }
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.path < b.path; });
  if (entries.empty()) {
    throw std::runtime_error(dir.string() + ": no PGM/PNG dataset files found");
  }
  return entries;
}

std::vector<DatasetEntry> read_manifest_csv(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  if (!in) throw std::runtime_error(csv.string() + ": cannot open manifest");
  const auto base = csv.parent_path();
  std::vector<DatasetEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw std::runtime_error(csv.string() + ":" + std::to_string(lineno) +
                               ": expected 'path,expression'");
    }
    const std::string pathfield = line.substr(0, comma);
    std::string code = line.substr(comma + 1);
    if (lineno == 1 && (code == "expression" || pathfield == "path")) continue;
    const auto expr = expression_from_code(code);
    if (!expr) {
      throw std::runtime_error(csv.string() + ":" + std::to_string(lineno) +
                               ": unknown expression code '" + code + "'");
    }
    std::filesystem::path p(pathfield);
    if (p.is_relative()) p = base / p;
    entries.push_back({p, *expr});
  }
  if (entries.empty()) throw std::runtime_error(csv.string() + ": empty manifest");
  return entries;
}

}  // namespace cava
