#include "cava/sensing.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "cava/image_io.hpp"
#include "cava/rng.hpp"

namespace cava {

SensingOperator::SensingOperator(Index m, Index n, std::uint64_t seed, Storage storage)
    : m_(m), n_(n), words_per_row_((n + 63) / 64), seed_(seed), storage_(storage) {
  if (m < 1) throw std::invalid_argument("sensing operator: m must be >= 1");
  if (m > n) {
    throw std::invalid_argument("sensing operator: m (" + std::to_string(m) +
                                ") must not exceed n (" + std::to_string(n) + ")");
  }
  if (storage_ == Storage::Dense) {
    bits_.resize(static_cast<std::size_t>(m_ * words_per_row_));
    for (Index i = 0; i < m_; ++i) {
      generate_row(i, bits_.data() + i * words_per_row_);
    }
  }
}

void SensingOperator::generate_row(Index i, std::uint64_t* buf) const {
  const std::uint64_t base = static_cast<std::uint64_t>(i) *
                             static_cast<std::uint64_t>(words_per_row_);
  const int tail = static_cast<int>(n_ & 63);
  for (Index w = 0; w < words_per_row_; ++w) {
    std::uint64_t word = splitmix64_at(seed_, base + static_cast<std::uint64_t>(w));
    if (tail != 0 && w == words_per_row_ - 1) {
      word &= (std::uint64_t{1} << tail) - 1;  // mask entries beyond n
    }
    buf[w] = word;
  }
}

const std::uint64_t* SensingOperator::row_words(Index i, std::uint64_t* buf) const {
  if (storage_ == Storage::Dense) {
    return bits_.data() + i * words_per_row_;
  }
  generate_row(i, buf);
  return buf;
}

Vector SensingOperator::apply(const Vector& s) const {
  if (s.size() != n_) {
    throw std::invalid_argument("sensing apply: vector length " + std::to_string(s.size()) +
                                " does not match n = " + std::to_string(n_));
  }
  Vector y(m_);
  std::vector<std::uint64_t> scratch(
      storage_ == Storage::OnTheFly ? static_cast<std::size_t>(words_per_row_) : 0);
  const double* sp = s.data();
  for (Index i = 0; i < m_; ++i) {
    const std::uint64_t* words = row_words(i, scratch.data());
    // four accumulators to break the add dependency chain; final combination
    // order is fixed, so results are identical across storage modes
    double acc0 = 0, acc1 = 0, acc2 = 0, acc3 = 0;
    for (Index w = 0; w < words_per_row_; ++w) {
      std::uint64_t b = words[w];
      const double* base = sp + (w << 6);
      while (b) {
        const int t0 = std::countr_zero(b);
        acc0 += base[t0];
        b &= b - 1;
        if (!b) break;
        const int t1 = std::countr_zero(b);
        acc1 += base[t1];
        b &= b - 1;
        if (!b) break;
        const int t2 = std::countr_zero(b);
        acc2 += base[t2];
        b &= b - 1;
        if (!b) break;
        const int t3 = std::countr_zero(b);
        acc3 += base[t3];
        b &= b - 1;
      }
    }
    y[i] = (acc0 + acc1) + (acc2 + acc3);
  }
  return y;
}

Vector SensingOperator::apply_adjoint(const Vector& r) const {
  if (r.size() != m_) {
    throw std::invalid_argument("sensing adjoint: vector length " + std::to_string(r.size()) +
                                " does not match m = " + std::to_string(m_));
  }
  Vector x = Vector::Zero(n_);
  std::vector<std::uint64_t> scratch(
      storage_ == Storage::OnTheFly ? static_cast<std::size_t>(words_per_row_) : 0);
  double* xp = x.data();
  for (Index i = 0; i < m_; ++i) {
    const double ri = r[i];
    if (ri == 0.0) continue;
    const std::uint64_t* words = row_words(i, scratch.data());
    for (Index w = 0; w < words_per_row_; ++w) {
      std::uint64_t b = words[w];
      double* base = xp + (w << 6);
      while (b) {
        base[std::countr_zero(b)] += ri;
        b &= b - 1;
      }
    }
  }
  return x;
}

double SensingOperator::entry(Index i, Index j) const {
  if (i < 0 || i >= m_ || j < 0 || j >= n_) {
    throw std::invalid_argument("sensing entry: index out of range");
  }
  const std::uint64_t word =
      storage_ == Storage::Dense
          ? bits_[static_cast<std::size_t>(i * words_per_row_ + (j >> 6))]
          : splitmix64_at(seed_, static_cast<std::uint64_t>(i) *
                                     static_cast<std::uint64_t>(words_per_row_) +
                                 static_cast<std::uint64_t>(j >> 6));
  return static_cast<double>((word >> (j & 63)) & 1);
}

Vector SensingOperator::column(Index j) const {
  Vector col(m_);
  for (Index i = 0; i < m_; ++i) col[i] = entry(i, j);
  return col;
}

Matrix SensingOperator::dense() const {
  Matrix out(m_, n_);
  for (Index i = 0; i < m_; ++i)
    for (Index j = 0; j < n_; ++j) out(i, j) = entry(i, j);
  return out;
}

SensingOperator gen_operator(Index m, Index n, std::uint64_t seed,
                             SensingOperator::Storage storage) {
  return SensingOperator(m, n, seed, storage);
}

CompressedSample compress_image(const Image& img, const WaveletSpec& spec, int level,
                                const SensingOperator& op) {
  const Index n = img.rows() * img.cols();
  if (op.cols() != n) {
    throw std::invalid_argument("compress_image: operator n = " + std::to_string(op.cols()) +
                                " does not match pixel count " + std::to_string(n));
  }
  const CoeffVector coeffs = fwt2(img, spec, level);
  CompressedSample sample;
  sample.y = op.apply(coeffs.values);
  sample.operator_seed = op.seed();
  return sample;
}

namespace {

constexpr char kSampleMagic[8] = {'C', 'A', 'V', 'A', 'S', 'M', 'P', '1'};

template <typename T>
void put_le(std::vector<unsigned char>& out, T v) {
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    out.push_back(static_cast<unsigned char>(static_cast<std::uint64_t>(v) >> (8 * b)));
  }
}

template <typename T>
T get_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) v |= std::uint64_t(p[b]) << (8 * b);
  return static_cast<T>(v);
}

}  // namespace

void write_sample_archive(const std::filesystem::path& path, const SampleArchive& archive) {
  std::vector<unsigned char> out;
  out.insert(out.end(), kSampleMagic, kSampleMagic + 8);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(archive.m));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(archive.n));
  put_le<std::uint64_t>(out, archive.operator_seed);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(archive.samples.size()));
  for (const auto& s : archive.samples) {
    if (s.y.size() != archive.m) {
      throw std::invalid_argument("sample archive: measurement length mismatch");
    }
    const std::int8_t label = s.label ? static_cast<std::int8_t>(*s.label) : std::int8_t{-1};
    out.push_back(static_cast<unsigned char>(label));
    for (Index i = 0; i < s.y.size(); ++i) {
      std::uint64_t u;
      std::memcpy(&u, &s.y[i], 8);
      put_le<std::uint64_t>(out, u);
    }
  }
  write_file_atomic(path, out.data(), out.size());
}

SampleArchive read_sample_archive(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  const std::string name = path.string();
  if (bytes.size() < 28 || std::memcmp(bytes.data(), kSampleMagic, 8) != 0) {
    throw std::runtime_error(name + ": not a sample archive (bad magic)");
  }
  SampleArchive a;
  a.m = get_le<std::uint32_t>(&bytes[8]);
  a.n = get_le<std::uint32_t>(&bytes[12]);
  a.operator_seed = get_le<std::uint64_t>(&bytes[16]);
  const std::uint32_t count = get_le<std::uint32_t>(&bytes[24]);
  const std::size_t record = 1 + static_cast<std::size_t>(a.m) * 8;
  if (bytes.size() != 28 + record * count) {
    throw std::runtime_error(name + ": truncated sample archive");
  }
  std::size_t pos = 28;
  a.samples.reserve(count);
  for (std::uint32_t s = 0; s < count; ++s) {
    CompressedSample cs;
    const auto label = static_cast<std::int8_t>(bytes[pos++]);
    if (label >= 0) {
      if (label >= kValenceCount) throw std::runtime_error(name + ": invalid label value");
      cs.label = static_cast<Valence>(label);
    }
    cs.operator_seed = a.operator_seed;
    cs.y.resize(a.m);
    for (Index i = 0; i < a.m; ++i) {
      const std::uint64_t u = get_le<std::uint64_t>(&bytes[pos]);
      pos += 8;
      std::memcpy(&cs.y[i], &u, 8);
    }
    a.samples.push_back(std::move(cs));
  }
  return a;
}

}  // namespace cava
