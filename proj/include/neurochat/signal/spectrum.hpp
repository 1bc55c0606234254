#pragma once

// One-sided power spectral density of a 1 s epoch via a real FFT (FFTW).
//
// Bins are 1 Hz apart (0..128 Hz, 129 bins). Scaling is density in uV^2/Hz,
// so the bin sum times the 1 Hz bin width equals the mean square of the
// signal in rectangular mode. The Hann mode divides by the window's power
// (sum of w^2) instead of N, which keeps the same scaling for broadband noise.

#include "neurochat/config.hpp"
#include "neurochat/errors.hpp"
#include "neurochat/signal/epoch.hpp"

#include <fftw3.h>

#include <array>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <vector>

namespace neurochat {

inline constexpr std::size_t kPsdBins = kEpochSamples / 2 + 1;
inline constexpr double kBinWidthHz = static_cast<double>(kSampleRateHz) / kEpochSamples;

using ChannelPsd = std::array<std::vector<double>, kChannels>;

namespace detail {

// FFTW's planner is not thread-safe; executing an existing plan is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace detail

class Spectrum {
public:
  explicit Spectrum(SpectrumWindow window = SpectrumWindow::kHann) : window_kind_(window) {
    in_.reset(static_cast<double*>(fftw_malloc(sizeof(double) * kEpochSamples)));
    out_.reset(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * kPsdBins)));
    {
      std::lock_guard lock(detail::fftw_planner_mutex());
      plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(kEpochSamples), in_.get(), out_.get(), FFTW_ESTIMATE);
    }
    taper_.assign(kEpochSamples, 1.0);
    if (window_kind_ == SpectrumWindow::kHann) {
      // Periodic Hann.
      for (std::size_t n = 0; n < kEpochSamples; ++n) {
        taper_[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / kEpochSamples);
      }
    }
    window_power_ = 0.0;
    for (double w : taper_) window_power_ += w * w;
  }

  Spectrum(const Spectrum&) = delete;
  Spectrum& operator=(const Spectrum&) = delete;

  ~Spectrum() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(plan_);
  }

  SpectrumWindow window() const { return window_kind_; }

  std::vector<double> psd(std::span<const double> samples) {
    if (samples.size() != kEpochSamples) {
      throw ContractViolation("PSD needs exactly " + std::to_string(kEpochSamples) + " samples, got " +
                              std::to_string(samples.size()));
    }
    for (std::size_t n = 0; n < kEpochSamples; ++n) in_.get()[n] = samples[n] * taper_[n];
    fftw_execute(plan_);

    const double scale = 1.0 / (kSampleRateHz * window_power_);
    std::vector<double> p(kPsdBins);
    for (std::size_t k = 0; k < kPsdBins; ++k) {
      const double re = out_.get()[k][0];
      const double im = out_.get()[k][1];
      const bool edge = (k == 0 || k == kPsdBins - 1);
      p[k] = (edge ? 1.0 : 2.0) * (re * re + im * im) * scale;
    }
    return p;
  }

  ChannelPsd psd(const Epoch& epoch) {
    ChannelPsd out;
    for (std::size_t ch = 0; ch < kChannels; ++ch) out[ch] = psd(epoch.samples[ch]);
    return out;
  }

private:
  SpectrumWindow window_kind_;
  std::unique_ptr<double, detail::FftwFree> in_;
  std::unique_ptr<fftw_complex, detail::FftwFree> out_;
  fftw_plan plan_ = nullptr;
  std::vector<double> taper_;
  double window_power_ = 0.0;
};

inline ChannelPsd power_spectral_density(const Epoch& epoch, SpectrumWindow window = SpectrumWindow::kHann) {
  Spectrum s(window);
  return s.psd(epoch);
}

}  // namespace neurochat
