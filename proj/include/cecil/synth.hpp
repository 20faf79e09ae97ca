#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "cecil/dataset.hpp"
#include "cecil/rng.hpp"

namespace cecil {

// Procedural texture benchmark. Classes come in pairs that share a color
// palette and differ only in texture (fine diagonal stripes vs. fine
// checkerboard), so class identity lives in high-frequency structure that
// aggressive lossy compression reshapes. That makes the benchmark both
// learnable at desk scale and sensitive to codec preprocessing choices.
struct SynthSpec {
  int classes = 10;
  int train_per_class = 64;
  int test_per_class = 24;
  int height = 32;
  int width = 32;
  std::uint32_t seed = 1;
};

namespace detail {

struct Rgb {
  double r, g, b;
};

inline Rgb hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0);
  double c = v * s;
  double x = c * (1.0 - std::fabs(std::fmod(h / 60.0, 2.0) - 1.0));
  double m = v - c;
  double r = 0, g = 0, b = 0;
  if (h < 60) { r = c; g = x; }
  else if (h < 120) { r = x; g = c; }
  else if (h < 180) { g = c; b = x; }
  else if (h < 240) { g = x; b = c; }
  else if (h < 300) { r = x; b = c; }
  else { r = c; b = x; }
  return {(r + m) * 255.0, (g + m) * 255.0, (b + m) * 255.0};
}

// Pinned uniform double in [0,1) from the standard-specified mt19937 stream.
inline double unit_draw(std::mt19937& gen) {
  return double(gen()) / 4294967296.0;
}

struct SynthClassParams {
  Rgb fg, bg;
  bool stripes;    // stripes vs checkerboard
  int base_period;
};

inline SynthClassParams synth_class_params(const SynthSpec& spec, int cls) {
  std::mt19937 gen(mix_seed(spec.seed, 0x0C1A5500u + std::uint32_t(cls)));
  int pair = cls / 2;
  int pairs = (spec.classes + 1) / 2;
  double hue = 360.0 * pair / pairs + 15.0;
  SynthClassParams p;
  p.fg = hsv_to_rgb(hue, 0.85, 0.92);
  p.bg = hsv_to_rgb(hue, 0.50, 0.42);
  p.stripes = (cls % 2 == 0);
  p.base_period = p.stripes ? 4 : 2;
  (void)gen;
  return p;
}

inline Image synth_image(const SynthSpec& spec, const SynthClassParams& p,
                         std::mt19937& gen) {
  Image img(spec.height, spec.width);
  int period = p.base_period + int(gen() % 2);          // per-sample scale jitter
  int phase = int(gen() % std::uint32_t(2 * period));
  double brightness = (unit_draw(gen) - 0.5) * 40.0;
  // nuisance low-frequency shading, random direction
  double gx = (unit_draw(gen) - 0.5) * 2.0;
  double gy = (unit_draw(gen) - 0.5) * 2.0;
  const double noise_amp = 12.0;
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) {
      bool on;
      if (p.stripes) {
        on = (((x + y + phase) / period) % 2) == 0;
      } else {
        on = (((x + phase) / period + (y + phase) / period) % 2) == 0;
      }
      const Rgb& base = on ? p.fg : p.bg;
      double shade = 18.0 * (gx * (double(x) / spec.width - 0.5) +
                             gy * (double(y) / spec.height - 0.5));
      double ch[3] = {base.r, base.g, base.b};
      for (int c = 0; c < 3; ++c) {
        double noise = (unit_draw(gen) - 0.5) * 2.0 * noise_amp;
        double v = ch[c] + brightness + shade + noise;
        img.at(y, x, c) =
            static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0) + 0.5);
      }
    }
  return img;
}

}  // namespace detail

inline DatasetHandle make_synthetic_dataset(const SynthSpec& spec) {
  require<ConfigError>(spec.classes > 0 && spec.train_per_class > 0 &&
                           spec.test_per_class > 0,
                       "synthetic dataset needs positive class and sample counts");
  DatasetHandle ds;
  ds.name = "synth-c" + std::to_string(spec.classes) + "-s" + std::to_string(spec.seed);
  ds.num_classes = spec.classes;
  for (int c = 0; c < spec.classes; ++c) ds.class_names.push_back("class" + std::to_string(c));
  for (int c = 0; c < spec.classes; ++c) {
    auto params = detail::synth_class_params(spec, c);
    for (int split = 0; split < 2; ++split) {
      int n = split == 0 ? spec.train_per_class : spec.test_per_class;
      auto* out = split == 0 ? &ds.train : &ds.test;
      for (int i = 0; i < n; ++i) {
        std::uint32_t salt = (std::uint32_t(split) << 30) |
                             (std::uint32_t(c) << 16) | std::uint32_t(i);
        std::mt19937 gen(mix_seed(spec.seed, salt));
        Sample s;
        s.image = detail::synth_image(spec, params, gen);
        s.label = c;
        s.source_bits = s.image.byte_size() * 8;
        s.encoded_bits = s.source_bits;
        out->push_back(std::move(s));
      }
    }
  }
  validate_dataset(ds);
  return ds;
}

}  // namespace cecil
