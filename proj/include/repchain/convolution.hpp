#pragma once

// Truncated linear convolution of real sequences, c[k] = sum_{i+j=k} a[i] b[j]
// for k < n_out. Transforms go through FFTW's real-to-complex plans; plans are
// cached per transform size and shared between threads (plan creation is
// serialized, execution is reentrant with the new-array interface).

#include <fftw3.h>

#include <algorithm>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <new>
#include <span>
#include <vector>

namespace repchain::conv {

template <class T>
struct fftw_allocator {
  using value_type = T;
  fftw_allocator() = default;
  template <class U>
  fftw_allocator(const fftw_allocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    void* p = fftw_malloc(n * sizeof(T));
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) noexcept { fftw_free(p); }

  template <class U>
  bool operator==(const fftw_allocator<U>&) const noexcept { return true; }
};

using real_buffer = std::vector<double, fftw_allocator<double>>;
using complex_buffer =
    std::vector<std::complex<double>, fftw_allocator<std::complex<double>>>;

namespace detail {

struct plan_pair {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
};

class plan_cache {
public:
  static plan_cache& instance() {
    static plan_cache cache;
    return cache;
  }

  plan_pair get(std::size_t n) {
    std::lock_guard lock(mutex_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    real_buffer r(n);
    complex_buffer c(n / 2 + 1);
    auto* cp = reinterpret_cast<fftw_complex*>(c.data());
    plan_pair p;
    p.forward = fftw_plan_dft_r2c_1d(static_cast<int>(n), r.data(), cp,
                                     FFTW_ESTIMATE);
    p.backward = fftw_plan_dft_c2r_1d(static_cast<int>(n), cp, r.data(),
                                      FFTW_ESTIMATE);
    plans_.emplace(n, p);
    return p;
  }

  plan_cache(const plan_cache&) = delete;
  plan_cache& operator=(const plan_cache&) = delete;

private:
  plan_cache() = default;
  ~plan_cache() {
    for (auto& [n, p] : plans_) {
      fftw_destroy_plan(p.forward);
      fftw_destroy_plan(p.backward);
    }
  }

  std::mutex mutex_;
  std::map<std::size_t, plan_pair> plans_;
};

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace detail

/// Below this output length the direct O(n^2) sum is used.
inline constexpr std::size_t direct_threshold = 48;

/// Half-spectrum of a zero-padded real sequence of transform length n.
class spectrum {
public:
  spectrum(std::span<const double> a, std::size_t n) : n_(n), data_(n / 2 + 1) {
    real_buffer in(n, 0.0);
    std::copy_n(a.begin(), std::min(a.size(), n), in.begin());
    auto plans = detail::plan_cache::instance().get(n);
    fftw_execute_dft_r2c(plans.forward, in.data(),
                         reinterpret_cast<fftw_complex*>(data_.data()));
  }

  std::size_t size() const noexcept { return n_; }

  /// Inverse transform of the pointwise product, first n_out samples.
  friend std::vector<double> multiply_inverse(const spectrum& x,
                                              const spectrum& y,
                                              std::size_t n_out) {
    const std::size_t n = x.n_;
    complex_buffer prod(x.data_.size());
    for (std::size_t k = 0; k < prod.size(); ++k) prod[k] = x.data_[k] * y.data_[k];
    real_buffer out(n);
    auto plans = detail::plan_cache::instance().get(n);
    fftw_execute_dft_c2r(plans.backward,
                         reinterpret_cast<fftw_complex*>(prod.data()), out.data());
    const double scale = 1.0 / static_cast<double>(n);
    std::vector<double> result(std::min(n_out, n));
    for (std::size_t k = 0; k < result.size(); ++k) result[k] = out[k] * scale;
    return result;
  }

private:
  std::size_t n_;
  complex_buffer data_;
};

/// Transform length that makes a cyclic convolution of sequences truncated to
/// n_out samples equal to the linear one on [0, n_out).
inline std::size_t transform_size(std::size_t n_out) {
  return detail::next_pow2(2 * n_out - 1);
}

inline std::vector<double> direct_convolve(std::span<const double> a,
                                           std::span<const double> b,
                                           std::size_t n_out) {
  std::vector<double> c(n_out, 0.0);
  const std::size_t na = std::min(a.size(), n_out);
  for (std::size_t i = 0; i < na; ++i) {
    if (a[i] == 0.0) continue;
    const std::size_t nb = std::min(b.size(), n_out - i);
    for (std::size_t j = 0; j < nb; ++j) c[i + j] += a[i] * b[j];
  }
  return c;
}

/// c[k] = sum_{i+j=k} a[i] b[j] for k < n_out.
inline std::vector<double> convolve(std::span<const double> a,
                                    std::span<const double> b, std::size_t n_out) {
  if (n_out == 0) return {};
  if (n_out <= direct_threshold) return direct_convolve(a, b, n_out);
  const std::size_t n = transform_size(n_out);
  spectrum sa(a.first(std::min(a.size(), n_out)), n);
  spectrum sb(b.first(std::min(b.size(), n_out)), n);
  auto c = multiply_inverse(sa, sb, n_out);
  c.resize(n_out, 0.0);
  return c;
}

}  // namespace repchain::conv
