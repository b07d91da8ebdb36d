#include "cubes/overlap.hpp"

#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

#include <fftw3.h>

namespace cubes::ovl {

namespace {

constexpr double kRoundGuard = 1e-6;

// FFTW's planner is not reentrant: plan creation and destruction must be
// serialized process-wide even when every thread works on its own arrays.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftPlans {
  int n = 0;
  fftw_plan fwd = nullptr;
  fftw_plan inv = nullptr;
  double* real = nullptr;
  fftw_complex* spec = nullptr;

  explicit FftPlans(int size) : n(size) {
    real = fftw_alloc_real(size_t(n) * n);
    spec = fftw_alloc_complex(size_t(n) * (n / 2 + 1));
    const std::lock_guard<std::mutex> lock(planner_mutex());
    fwd = fftw_plan_dft_r2c_2d(n, n, real, spec, FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_2d(n, n, spec, real, FFTW_ESTIMATE);
  }
  ~FftPlans() {
    {
      const std::lock_guard<std::mutex> lock(planner_mutex());
      fftw_destroy_plan(fwd);
      fftw_destroy_plan(inv);
    }
    fftw_free(real);
    fftw_free(spec);
  }

  FftPlans(const FftPlans&) = delete;
  FftPlans& operator=(const FftPlans&) = delete;
};

// Plans execute on their creation-time buffers, so each thread keeps its own
// set (released at thread exit; main-thread locals die before the mutex).
FftPlans& plans_for(int n) {
  thread_local std::map<int, std::unique_ptr<FftPlans>> cache;
  auto it = cache.find(n);
  if (it == cache.end())
    it = cache.emplace(n, std::make_unique<FftPlans>(n)).first;
  return *it->second;
}

std::vector<std::complex<double>> forward_fft(const sim::GridImage& img, int n) {
  FftPlans& p = plans_for(n);
  std::fill(p.real, p.real + size_t(n) * n, 0.0);
  for (int y = 0; y < img.side; ++y)
    for (int x = 0; x < img.side; ++x)
      p.real[size_t(y) * n + x] = double(img.bin(x, y));
  fftw_execute(p.fwd);
  size_t m = size_t(n) * (n / 2 + 1);
  std::vector<std::complex<double>> out(m);
  for (size_t i = 0; i < m; ++i) out[i] = {p.spec[i][0], p.spec[i][1]};
  return out;
}

long long round_guarded(double v, double scale) {
  double r = std::nearbyint(v);
  if (std::abs(v - r) > kRoundGuard * std::max(1.0, scale))
    throw std::runtime_error("overlap: correlation value drifted off-integer");
  return (long long)(r);
}

}  // namespace

sim::GridImage apply_transform(const sim::GridImage& img, TransformId t) {
  sim::GridImage out = t.mirrored ? sim::mirror_horizontal(img) : img;
  for (int r = 0; r < t.rotation; ++r) out = sim::rotate90_ccw(out);
  return out;
}

CorrelationPeak cross_correlate_peak(const sim::GridImage& a, const sim::GridImage& b) {
  if (a.side != b.side || a.side <= 0)
    throw std::invalid_argument("cross_correlate_peak: mismatched images");
  const int s = a.side;
  int n = 2 * s;  // >= 2s-1: linear correlation, no circular aliasing

  double count = 0;
  for (uint8_t v : a.binary) count += v;

  auto fa = forward_fft(a, n);
  auto fb = forward_fft(b, n);
  FftPlans& p = plans_for(n);
  const size_t m = size_t(n) * (n / 2 + 1);
  const double norm = 1.0 / (double(n) * double(n));
  for (size_t i = 0; i < m; ++i) {
    std::complex<double> v = std::conj(fa[i]) * fb[i] * norm;
    p.spec[i][0] = v.real();
    p.spec[i][1] = v.imag();
  }
  fftw_execute(p.inv);

  // corr(dx, dy) lives at ((dy mod n), (dx mod n)); scan shifts in
  // lexicographic (dx, dy) order keeping strictly-greater peaks.
  CorrelationPeak best;
  bool first = true;
  for (int dx = -(s - 1); dx <= s - 1; ++dx)
    for (int dy = -(s - 1); dy <= s - 1; ++dy) {
      int iy = (dy % n + n) % n, ix = (dx % n + n) % n;
      long long v = round_guarded(p.real[size_t(iy) * n + ix], count);
      if (first || v > best.value) {
        best.value = v;
        best.shift = {dx, dy};
        first = false;
      }
    }
  return best;
}

OverlapResult overlap(const sim::GridImage& current, const sim::GridImage& target) {
  OverlapResult best;
  bool first = true;
  for (int id = 0; id < 8; ++id) {
    TransformId t = TransformId::from_id(id);
    CorrelationPeak peak = cross_correlate_peak(apply_transform(current, t), target);
    if (first || peak.value > best.value) {
      best.value = int(peak.value);
      best.best_transform = t;
      best.best_shift = peak.shift;
      first = false;
    }
  }
  long long n_cur = 0, n_tgt = 0;
  for (uint8_t v : current.binary) n_cur += v;
  for (uint8_t v : target.binary) n_tgt += v;
  if (best.value < 0 || best.value > std::min(n_cur, n_tgt))
    throw std::runtime_error("overlap: value outside [0, N]");
  return best;
}

}  // namespace cubes::ovl
