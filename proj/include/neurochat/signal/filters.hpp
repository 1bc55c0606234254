#pragma once

// Streaming IIR filters: biquad sections in transposed direct form II,
// Butterworth high/low-pass cascades and a second-order notch.
//
// Coefficients follow the bilinear-transform "cookbook" formulas, which
// prewarp at the design frequency. A cascade of cookbook sections using the
// Butterworth pole Qs reproduces the digital Butterworth response exactly.

#include "neurochat/errors.hpp"
#include "neurochat/signal/types.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

namespace neurochat {

struct BiquadCoefficients {
  // Normalized so that a0 == 1.
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;

  // H(e^{jw}) at frequency f.
  std::complex<double> response(double f_hz, double fs_hz) const {
    const std::complex<double> z1 = std::polar(1.0, -2.0 * std::numbers::pi * f_hz / fs_hz);
    const std::complex<double> z2 = z1 * z1;
    return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
  }
};

enum class BiquadKind { kLowPass, kHighPass, kNotch };

inline BiquadCoefficients design_biquad(BiquadKind kind, double f0_hz, double q, double fs_hz) {
  const double w0 = 2.0 * std::numbers::pi * f0_hz / fs_hz;
  const double cw = std::cos(w0);
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;

  BiquadCoefficients c;
  switch (kind) {
    case BiquadKind::kLowPass:
      c.b0 = (1.0 - cw) / 2.0;
      c.b1 = 1.0 - cw;
      c.b2 = (1.0 - cw) / 2.0;
      break;
    case BiquadKind::kHighPass:
      c.b0 = (1.0 + cw) / 2.0;
      c.b1 = -(1.0 + cw);
      c.b2 = (1.0 + cw) / 2.0;
      break;
    case BiquadKind::kNotch:
      c.b0 = 1.0;
      c.b1 = -2.0 * cw;
      c.b2 = 1.0;
      break;
  }
  c.b0 /= a0;
  c.b1 /= a0;
  c.b2 /= a0;
  c.a1 = -2.0 * cw / a0;
  c.a2 = (1.0 - alpha) / a0;
  return c;
}

// Pole-pair quality factors of an even-order Butterworth prototype.
inline std::vector<double> butterworth_qs(int order) {
  if (order < 2 || order % 2 != 0) throw ContractViolation("Butterworth order must be even and >= 2");
  std::vector<double> qs;
  for (int k = 0; k < order / 2; ++k) {
    qs.push_back(1.0 / (2.0 * std::cos(std::numbers::pi * (2 * k + 1) / (2.0 * order))));
  }
  return qs;
}

class Biquad {
public:
  explicit Biquad(BiquadCoefficients c = {}) : c_(c) {}

  double process(double x) {
    const double y = c_.b0 * x + z1_;
    z1_ = c_.b1 * x - c_.a1 * y + z2_;
    z2_ = c_.b2 * x - c_.a2 * y;
    return y;
  }

  void reset() { z1_ = z2_ = 0.0; }
  const BiquadCoefficients& coefficients() const { return c_; }

private:
  BiquadCoefficients c_;
  double z1_ = 0.0;
  double z2_ = 0.0;
};

// A chain of biquads applied to one channel. Causal and stateful: feeding a
// stream in pieces gives the same output as feeding it at once.
class SosFilter {
public:
  SosFilter() = default;
  explicit SosFilter(std::vector<BiquadCoefficients> sections) {
    for (const auto& s : sections) stages_.emplace_back(s);
  }

  double process(double x) {
    for (auto& s : stages_) x = s.process(x);
    return x;
  }

  // Filters `in` into `out` (same length). `first_index` is only used to
  // report where a non-finite sample sits in the overall stream.
  void process(std::span<const double> in, std::span<double> out, std::size_t first_index = 0) {
    if (in.size() != out.size()) throw ContractViolation("filter output length must equal input length");
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (!std::isfinite(in[i])) throw StreamQualityError("non-finite input sample", first_index + i);
      out[i] = process(in[i]);
    }
  }

  std::vector<double> process(std::span<const double> in) {
    std::vector<double> out(in.size());
    process(in, out);
    return out;
  }

  void reset() {
    for (auto& s : stages_) s.reset();
  }

  std::vector<BiquadCoefficients> sections() const {
    std::vector<BiquadCoefficients> out;
    for (const auto& s : stages_) out.push_back(s.coefficients());
    return out;
  }

  std::complex<double> response(double f_hz, double fs_hz) const {
    std::complex<double> h{1.0, 0.0};
    for (const auto& s : stages_) h *= s.coefficients().response(f_hz, fs_hz);
    return h;
  }

private:
  std::vector<Biquad> stages_;
};

// Butterworth high-pass at `low_hz` cascaded with a Butterworth low-pass at
// `high_hz`, each of the given order.
inline SosFilter make_bandpass(double low_hz, double high_hz, int order, double fs_hz) {
  if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < fs_hz / 2.0)) {
    throw ContractViolation("bandpass edges must satisfy 0 < low < high < fs/2");
  }
  std::vector<BiquadCoefficients> sections;
  for (double q : butterworth_qs(order)) sections.push_back(design_biquad(BiquadKind::kHighPass, low_hz, q, fs_hz));
  for (double q : butterworth_qs(order)) sections.push_back(design_biquad(BiquadKind::kLowPass, high_hz, q, fs_hz));
  return SosFilter(std::move(sections));
}

inline SosFilter make_notch(double f0_hz, double q, double fs_hz) {
  if (!(f0_hz > 0.0 && f0_hz < fs_hz / 2.0 && q > 0.0)) throw ContractViolation("notch parameters out of range");
  return SosFilter({design_biquad(BiquadKind::kNotch, f0_hz, q, fs_hz)});
}

// Band-pass followed by notch, one independent state per channel.
class ChannelFilterBank {
public:
  ChannelFilterBank(double low_hz, double high_hz, int order, double notch_hz, double notch_q,
                    double fs_hz = kSampleRateHz) {
    for (std::size_t ch = 0; ch < kChannels; ++ch) {
      bandpass_[ch] = make_bandpass(low_hz, high_hz, order, fs_hz);
      notch_[ch] = make_notch(notch_hz, notch_q, fs_hz);
    }
  }

  // Filters one frame in place. Throws StreamQualityError on non-finite input.
  void process(EegFrame& frame) {
    for (std::size_t ch = 0; ch < kChannels; ++ch) {
      if (!std::isfinite(frame.channels[ch])) throw StreamQualityError("non-finite input sample", samples_seen_);
    }
    for (std::size_t ch = 0; ch < kChannels; ++ch) {
      frame.channels[ch] = notch_[ch].process(bandpass_[ch].process(frame.channels[ch]));
    }
    ++samples_seen_;
  }

  std::complex<double> response(double f_hz, double fs_hz = kSampleRateHz) const {
    return bandpass_[0].response(f_hz, fs_hz) * notch_[0].response(f_hz, fs_hz);
  }

private:
  std::array<SosFilter, kChannels> bandpass_;
  std::array<SosFilter, kChannels> notch_;
  std::size_t samples_seen_ = 0;
};

}  // namespace neurochat
