#pragma once

// Engine configuration, loadable from an INI-style key = value file.
//
//   [signal]   sample_rate_hz (must be 256)
//   [bands]    theta, alpha, beta   -- "low high" in Hz, half-open [low, high)
//   [filters]  bandpass_low_hz, bandpass_high_hz, bandpass_order, notch_hz, notch_q
//   [spectrum] window = hann | rectangular
//   [windows]  main_s, calibration_s, task_s, min_task_windows, probe_s, probe_quality
//   [engine]   epsilon, artifact_uv, stale_quality, default_frozen_score
//   [llm]      model, temperature
//
// Missing keys keep their defaults. See config/neurochat.ini for a complete file.

#include "neurochat/errors.hpp"
#include "neurochat/signal/types.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <fstream>
#include <optional>
#include <sstream>
#include <string>

namespace neurochat {

struct Band {
  double low_hz = 0.0;
  double high_hz = 0.0;
};

enum class SpectrumWindow { kHann, kRectangular };

struct EngineConfig {
  int sample_rate_hz = kSampleRateHz;

  Band theta{4.0, 7.0};
  Band alpha{7.0, 11.0};
  Band beta{11.0, 20.0};

  double bandpass_low_hz = 1.0;
  double bandpass_high_hz = 30.0;
  int bandpass_order = 4;
  double notch_hz = 60.0;
  double notch_q = 30.0;

  SpectrumWindow spectrum_window = SpectrumWindow::kHann;

  double main_window_s = 15.0;
  double calibration_window_s = 10.0;
  double task_s = 120.0;
  int min_task_windows = 30;
  double probe_s = 5.0;
  double probe_quality = 0.8;

  double epsilon = 1e-12;
  double artifact_uv = 200.0;
  double stale_quality = 0.5;
  double default_frozen_score = 0.5;

  std::string model = "gpt-4-turbo";
  std::optional<double> temperature;

  void validate() const {
    if (sample_rate_hz != kSampleRateHz) {
      throw ConfigError("sample_rate_hz must be 256, got " + std::to_string(sample_rate_hz));
    }
    for (const Band* b : {&theta, &alpha, &beta}) {
      if (!(b->low_hz < b->high_hz) || b->low_hz < 1.0 || b->high_hz > 30.0) {
        throw ConfigError("band edges must satisfy 1 <= low < high <= 30");
      }
    }
    if (bandpass_order < 2 || bandpass_order % 2 != 0 || bandpass_order > 12) {
      throw ConfigError("bandpass_order must be an even number in [2, 12]");
    }
    if (!(bandpass_low_hz > 0.0 && bandpass_low_hz < bandpass_high_hz &&
          bandpass_high_hz < sample_rate_hz / 2.0)) {
      throw ConfigError("bandpass edges out of range");
    }
    if (!(notch_hz > 0.0 && notch_hz < sample_rate_hz / 2.0 && notch_q > 0.0)) {
      throw ConfigError("notch parameters out of range");
    }
    if (!(main_window_s >= 1.0 && calibration_window_s >= 1.0 && task_s > 0.0 && probe_s >= 1.0)) {
      throw ConfigError("window lengths must be at least one epoch");
    }
    if (!(epsilon > 0.0 && artifact_uv > 0.0)) throw ConfigError("epsilon and artifact_uv must be positive");
    if (!(stale_quality >= 0.0 && stale_quality <= 1.0 && probe_quality >= 0.0 && probe_quality <= 1.0)) {
      throw ConfigError("quality thresholds must lie in [0, 1]");
    }
    if (!(default_frozen_score >= 0.0 && default_frozen_score <= 1.0)) {
      throw ConfigError("default_frozen_score must lie in [0, 1]");
    }
  }
};

namespace detail {

inline Band parse_band(const std::string& text, const char* key) {
  std::istringstream in(text);
  Band b;
  if (!(in >> b.low_hz >> b.high_hz)) throw ConfigError(std::string("bad band value for ") + key);
  return b;
}

// Strict numeric read: a present key that does not parse is an error.
template <class T>
void read_value(const boost::property_tree::ptree& tree, const char* path, T& dst) {
  auto text = tree.get_optional<std::string>(path);
  if (!text) return;
  std::istringstream in(*text);
  T v{};
  if (!(in >> v) || !(in >> std::ws).eof()) throw ConfigError(std::string("bad config value for ") + path + ": " + *text);
  dst = v;
}

}  // namespace detail

inline EngineConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(e.what());
  }

  EngineConfig c;
  try {
    detail::read_value(tree, "signal.sample_rate_hz", c.sample_rate_hz);
    if (auto v = tree.get_optional<std::string>("bands.theta")) c.theta = detail::parse_band(*v, "theta");
    if (auto v = tree.get_optional<std::string>("bands.alpha")) c.alpha = detail::parse_band(*v, "alpha");
    if (auto v = tree.get_optional<std::string>("bands.beta")) c.beta = detail::parse_band(*v, "beta");

    detail::read_value(tree, "filters.bandpass_low_hz", c.bandpass_low_hz);
    detail::read_value(tree, "filters.bandpass_high_hz", c.bandpass_high_hz);
    detail::read_value(tree, "filters.bandpass_order", c.bandpass_order);
    detail::read_value(tree, "filters.notch_hz", c.notch_hz);
    detail::read_value(tree, "filters.notch_q", c.notch_q);

    const auto window = tree.get<std::string>("spectrum.window", "hann");
    if (window == "hann") {
      c.spectrum_window = SpectrumWindow::kHann;
    } else if (window == "rectangular") {
      c.spectrum_window = SpectrumWindow::kRectangular;
    } else {
      throw ConfigError("spectrum.window must be hann or rectangular");
    }

    detail::read_value(tree, "windows.main_s", c.main_window_s);
    detail::read_value(tree, "windows.calibration_s", c.calibration_window_s);
    detail::read_value(tree, "windows.task_s", c.task_s);
    detail::read_value(tree, "windows.min_task_windows", c.min_task_windows);
    detail::read_value(tree, "windows.probe_s", c.probe_s);
    detail::read_value(tree, "windows.probe_quality", c.probe_quality);

    detail::read_value(tree, "engine.epsilon", c.epsilon);
    detail::read_value(tree, "engine.artifact_uv", c.artifact_uv);
    detail::read_value(tree, "engine.stale_quality", c.stale_quality);
    detail::read_value(tree, "engine.default_frozen_score", c.default_frozen_score);

    c.model = tree.get("llm.model", c.model);
    if (tree.get_optional<std::string>("llm.temperature")) {
      double t = 0.0;
      detail::read_value(tree, "llm.temperature", t);
      c.temperature = t;
    }
  } catch (const pt::ptree_bad_data& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

inline EngineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_config(in);
}

}  // namespace neurochat
