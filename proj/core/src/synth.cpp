#include "delnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "delnet/error.hpp"
#include "delnet/random.hpp"

namespace delnet {

namespace {

constexpr std::uint64_t kCleanTag = 0xc1ea2ull;
constexpr std::uint64_t kDegradeTag = 0xde6ad3ull;

std::uint64_t family_tag(Family f) { return static_cast<std::uint64_t>(f) + 1; }

double draw(CounterRng& rng, const Range& r) { return rng.uniform(r.lo, r.hi); }

std::int64_t draw_int(CounterRng& rng, const Range& r) {
  return rng.integer(static_cast<std::int64_t>(r.lo), static_cast<std::int64_t>(r.hi));
}

void require_image(const Tensor& image, const char* where) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError(std::string(where) + ": expected 3 x H x W, got " +
                     shape_string(image.shape()));
  }
}

// Additive single-channel mask applied equally to all colour channels.
Tensor add_mask(const Tensor& clean, const std::vector<double>& mask) {
  std::vector<double> out(clean.data().begin(), clean.data().end());
  const std::size_t plane = mask.size();
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] += mask[i];
  }
  return Tensor::from_data(clean.shape(), std::move(out));
}

std::vector<double> rain_mask(const RainParams& p, CounterRng& rng, std::size_t h, std::size_t w) {
  std::vector<double> lines(h * w, 0.0);
  const auto count = draw_int(rng, p.streaks);
  for (std::int64_t s = 0; s < count; ++s) {
    const double angle = draw(rng, p.angle_deg) * std::numbers::pi / 180.0;
    const double length = draw(rng, p.length_px);
    const double intensity = draw(rng, p.intensity);
    const double x0 = rng.uniform(-2.0, static_cast<double>(w) + 2.0);
    const double y0 = rng.uniform(-2.0, static_cast<double>(h) + 2.0);
    const double dx = std::cos(angle);
    const double dy = std::sin(angle);
    for (double t = 0.0; t <= length; t += 0.25) {
      const long px = std::lround(x0 + t * dx);
      const long py = std::lround(y0 + t * dy);
      if (px < 0 || py < 0 || px >= static_cast<long>(w) || py >= static_cast<long>(h)) continue;
      auto& v = lines[static_cast<std::size_t>(py) * w + static_cast<std::size_t>(px)];
      v = std::max(v, intensity);
    }
  }
  // 3×3 binomial blur, zero boundary.
  static constexpr double kTap[3] = {0.25, 0.5, 0.25};
  std::vector<double> mask(h * w, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int ky = -1; ky <= 1; ++ky) {
        for (int kx = -1; kx <= 1; ++kx) {
          const long sy = static_cast<long>(y) + ky;
          const long sx = static_cast<long>(x) + kx;
          if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w)) continue;
          acc += kTap[ky + 1] * kTap[kx + 1] * lines[static_cast<std::size_t>(sy) * w + sx];
        }
      }
      mask[y * w + x] = acc;
    }
  }
  return mask;
}

std::vector<double> snow_mask(const SnowParams& p, CounterRng& rng, std::size_t h, std::size_t w) {
  std::vector<double> mask(h * w, 0.0);
  const auto count = draw_int(rng, p.flakes);
  for (std::int64_t s = 0; s < count; ++s) {
    const double cx = rng.uniform(0.0, static_cast<double>(w));
    const double cy = rng.uniform(0.0, static_cast<double>(h));
    const double radius = draw(rng, p.radius_px);
    const double intensity = draw(rng, p.intensity);
    const long reach = static_cast<long>(std::ceil(radius + 1.0));
    for (long y = static_cast<long>(cy) - reach; y <= static_cast<long>(cy) + reach; ++y) {
      for (long x = static_cast<long>(cx) - reach; x <= static_cast<long>(cx) + reach; ++x) {
        if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) continue;
        const double d = std::hypot(static_cast<double>(x) + 0.5 - cx, static_cast<double>(y) + 0.5 - cy);
        // Solid core with a one-pixel linear falloff.
        const double v = intensity * std::clamp(radius + 0.5 - d, 0.0, 1.0);
        auto& m = mask[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
        m = std::max(m, v);
      }
    }
  }
  return mask;
}

}  // namespace

std::string to_string(Family family) {
  switch (family) {
    case Family::Haze: return "haze";
    case Family::Rain: return "rain";
    case Family::Snow: return "snow";
  }
  return "haze";
}

Family family_from_string(const std::string& name) {
  if (name == "haze") return Family::Haze;
  if (name == "rain") return Family::Rain;
  if (name == "snow") return Family::Snow;
  throw ConfigError("unknown degradation family '" + name + "'");
}

Tensor generate_clean(std::uint64_t seed, std::uint64_t index, std::size_t size) {
  if (size < 8) {
    throw ShapeError("generate_clean: size must be at least 8");
  }
  CounterRng rng(seed, stream_key(kCleanTag, index));
  const std::size_t plane = size * size;
  std::vector<double> img(3 * plane, 0.0);

  const auto gradients = rng.integer(2, 4);
  for (std::int64_t g = 0; g < gradients; ++g) {
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    double c0[3], c1[3];
    for (auto& c : c0) c = rng.uniform();
    for (auto& c : c1) c = rng.uniform();
    const double ct = std::cos(theta), st = std::sin(theta);
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double u = static_cast<double>(x) / static_cast<double>(size - 1) - 0.5;
        const double v = static_cast<double>(y) / static_cast<double>(size - 1) - 0.5;
        const double s = std::clamp(0.5 + u * ct + v * st, 0.0, 1.0);
        for (std::size_t c = 0; c < 3; ++c) {
          img[c * plane + y * size + x] += (c0[c] + (c1[c] - c0[c]) * s) / static_cast<double>(gradients);
        }
      }
    }
  }

  const auto shapes = rng.integer(1, 3);
  const double fs = static_cast<double>(size);
  for (std::int64_t k = 0; k < shapes; ++k) {
    const bool disc = rng.uniform() < 0.5;
    double color[3];
    for (auto& c : color) c = rng.uniform();
    const double cx = rng.uniform(0.0, fs);
    const double cy = rng.uniform(0.0, fs);
    const double a = rng.uniform(fs / 10.0, fs / 4.0);
    const double b = rng.uniform(fs / 10.0, fs / 4.0);
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double px = static_cast<double>(x) + 0.5 - cx;
        const double py = static_cast<double>(y) + 0.5 - cy;
        const bool inside = disc ? (px * px + py * py <= a * a)
                                 : (std::abs(px) <= a && std::abs(py) <= b);
        if (!inside) continue;
        for (std::size_t c = 0; c < 3; ++c) img[c * plane + y * size + x] = color[c];
      }
    }
  }
  for (auto& v : img) v = std::clamp(v, 0.0, 1.0);
  return Tensor::from_data({3, size, size}, std::move(img));
}

Tensor apply_haze(const Tensor& clean, double transmission, double airlight) {
  require_image(clean, "apply_haze");
  std::vector<double> out(clean.data().begin(), clean.data().end());
  for (auto& v : out) v = v * transmission + airlight * (1.0 - transmission);
  return Tensor::from_data(clean.shape(), std::move(out));
}

Tensor degrade_unclamped(const Tensor& clean, const DegradationSpec& spec, std::uint64_t index) {
  require_image(clean, "degrade");
  CounterRng rng(spec.seed, stream_key(kDegradeTag, family_tag(spec.family), index));
  const std::size_t h = clean.dim(1), w = clean.dim(2);
  switch (spec.family) {
    case Family::Haze: {
      const double t = draw(rng, spec.haze.transmission);
      const double a = draw(rng, spec.haze.airlight);
      return apply_haze(clean, t, a);
    }
    case Family::Rain:
      return add_mask(clean, rain_mask(spec.rain, rng, h, w));
    case Family::Snow:
      return add_mask(clean, snow_mask(spec.snow, rng, h, w));
  }
  throw Error("degrade: unknown family");
}

Tensor degrade(const Tensor& clean, const DegradationSpec& spec, std::uint64_t index) {
  std::vector<double> out;
  {
    Tensor raw = degrade_unclamped(clean, spec, index);
    out.assign(raw.data().begin(), raw.data().end());
  }
  for (auto& v : out) v = std::clamp(v, 0.0, 1.0);
  return Tensor::from_data(clean.shape(), std::move(out));
}

SamplePair make_sample(const DegradationSpec& spec, std::uint64_t index, std::size_t size) {
  SamplePair pair;
  pair.clean = generate_clean(spec.seed, index, size);
  pair.degraded = degrade(pair.clean, spec, index);
  pair.family = spec.family;
  pair.index = index;
  return pair;
}

Tensor stack_images(const std::vector<Tensor>& images) {
  if (images.empty()) {
    throw ShapeError("stack_images: no images");
  }
  const Shape& s = images.front().shape();
  std::vector<double> data;
  data.reserve(images.size() * images.front().numel());
  for (const auto& img : images) {
    if (img.shape() != s) {
      throw ShapeError("stack_images: inconsistent image shapes");
    }
    data.insert(data.end(), img.data().begin(), img.data().end());
  }
  Shape out{images.size()};
  out.insert(out.end(), s.begin(), s.end());
  return Tensor::from_data(std::move(out), std::move(data));
}

Tensor batch_item(const Tensor& batch, std::size_t n) {
  if (batch.rank() != 4 || n >= batch.dim(0)) {
    throw ShapeError("batch_item: index out of range");
  }
  const std::size_t per = batch.numel() / batch.dim(0);
  auto d = batch.data().subspan(n * per, per);
  return Tensor::from_data({1, batch.dim(1), batch.dim(2), batch.dim(3)},
                           std::vector<double>(d.begin(), d.end()));
}

SeparationReport family_statistics_separation(std::size_t samples_per_family, std::uint64_t seed,
                                              std::size_t size, const MiniBackbone& encoder,
                                              SignatureNormalization mode) {
  if (samples_per_family < 32) {
    throw Error("family_statistics_separation: need at least 32 samples per family");
  }
  constexpr std::size_t kBatch = 2;
  const std::size_t half = samples_per_family / 2;
  SeparationReport report;
  report.samples_per_family = samples_per_family;
  std::vector<TaskVector> first, second, first_spread;
  for (Family f : kAllFamilies) {
    DegradationSpec spec;
    spec.family = f;
    spec.seed = seed;
    std::vector<TaskVector> batches_a, batches_b, all;
    for (std::size_t start = 0; start + kBatch <= 2 * half; start += kBatch) {
      std::vector<Tensor> imgs;
      for (std::size_t i = start; i < start + kBatch; ++i) {
        imgs.push_back(make_sample(spec, i, size).degraded);
      }
      TaskVector v = extract_task_vector(encoder.encode(stack_images(imgs)));
      (start < half ? batches_a : batches_b).push_back(v);
      all.push_back(v);
    }
    report.family_means.push_back(average_task_vectors(all));
    first.push_back(average_task_vectors(batches_a));
    first_spread.push_back(spread_of_task_vectors(batches_a));
    second.push_back(average_task_vectors(batches_b));
  }
  std::vector<RegisteredSignature> registry;
  for (std::size_t i = 0; i < first.size(); ++i) {
    registry.push_back({static_cast<TaskId>(i), first[i], first_spread[i]});
  }
  const SignatureSpace space(mode, registry);
  auto s_sum = [&space](const TaskVector& a, const TaskVector& b) {
    auto ma = space.map(a);
    auto mb = space.map(b);
    const double cos = cosine_similarity(ma, mb);
    const double euc = 1.0 / (1.0 + euclidean_distance(ma, mb));
    const double pear = pearson_similarity(ma, mb);
    return combine_similarity(cos, euc, pear);
  };
  for (std::size_t i = 0; i < 3; ++i) report.within_family.push_back(s_sum(second[i], first[i]));
  report.between_family.push_back(s_sum(second[0], first[1]));
  report.between_family.push_back(s_sum(second[0], first[2]));
  report.between_family.push_back(s_sum(second[1], first[2]));
  return report;
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
  require_image(image, "write_ppm");
  const std::size_t h = image.dim(1), w = image.dim(2), plane = h * w;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw FormatError("cannot write " + path.string());
  }
  out << "P6\n" << w << ' ' << h << "\n255\n";
  auto d = image.data();
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::clamp(d[c * plane + i], 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::floor(v * 255.0 + 0.5))));
    }
  }
}

}  // namespace delnet
