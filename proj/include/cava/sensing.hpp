#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "cava/dataset.hpp"
#include "cava/types.hpp"
#include "cava/wavelet.hpp"

namespace cava {

/// Seeded binary M x N measurement operator with entries in {0,1}, i.i.d.
/// Bernoulli(1/2). The matrix is fully determined by (m, n, seed):
/// 64-entry word w of row i is SplitMix64 output (i * words_per_row + w) of
/// the stream seeded with `seed`; entry j of the row is bit (j & 63) of word
/// (j >> 6), LSB first (format version 1, pinned). Dense mode caches the bit
/// words; on-the-fly mode regenerates them per application, producing
/// bit-identical measurements.
class SensingOperator {
 public:
  enum class Storage { Dense, OnTheFly };

  SensingOperator(Index m, Index n, std::uint64_t seed,
                  Storage storage = Storage::Dense);

  Index rows() const { return m_; }
  Index cols() const { return n_; }
  std::uint64_t seed() const { return seed_; }
  Storage storage() const { return storage_; }

  /// y = Phi s (exact f64 dot products, fixed summation order).
  Vector apply(const Vector& s) const;

  /// Phi^T r.
  Vector apply_adjoint(const Vector& r) const;

  double entry(Index i, Index j) const;
  Vector column(Index j) const;
  Matrix dense() const;

 private:
  void generate_row(Index i, std::uint64_t* buf) const;
  // Returns the row's bit words, using `buf` (words_per_row_ entries) in
  // on-the-fly mode.
  const std::uint64_t* row_words(Index i, std::uint64_t* buf) const;

  Index m_ = 0;
  Index n_ = 0;
  Index words_per_row_ = 0;
  std::uint64_t seed_ = 0;
  Storage storage_ = Storage::Dense;
  std::vector<std::uint64_t> bits_;
};

SensingOperator gen_operator(Index m, Index n, std::uint64_t seed,
                             SensingOperator::Storage storage = SensingOperator::Storage::Dense);

/// 100 * m / n.
inline double compression_ratio(Index m, Index n) {
  if (n < 1) throw std::invalid_argument("compression_ratio: n must be >= 1");
  return 100.0 * static_cast<double>(m) / static_cast<double>(n);
}

/// Measurement vector plus provenance; the only representation of an image
/// that classifiers or archives ever see.
struct CompressedSample {
  Vector y;
  std::optional<Valence> label;
  std::uint64_t operator_seed = 0;

  Index m() const { return y.size(); }
};

/// y = Phi * fwt2(img): the acquisition ("encryption") step, noiseless.
CompressedSample compress_image(const Image& img, const WaveletSpec& spec, int level,
                                const SensingOperator& op);

/// Flat little-endian binary archive of same-m samples:
///   magic "CAVASMP1", u32 m, u32 n, u64 operator_seed, u32 count,
///   then per sample: i8 label (-1 none, 0 positive, 1 neutral, 2 negative)
///   followed by m f64 measurements.
struct SampleArchive {
  Index m = 0;
  Index n = 0;
  std::uint64_t operator_seed = 0;
  std::vector<CompressedSample> samples;
};

void write_sample_archive(const std::filesystem::path& path, const SampleArchive& archive);
SampleArchive read_sample_archive(const std::filesystem::path& path);

}  // namespace cava
