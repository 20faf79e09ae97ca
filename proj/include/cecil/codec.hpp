#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>
#if __has_include(<sys/wait.h>)
#include <sys/wait.h>
#endif

#include <openssl/evp.h>
#include <opencv2/imgcodecs.hpp>

#include "cecil/csv.hpp"
#include "cecil/dataset.hpp"
#include "cecil/image.hpp"
#include "cecil/svgplot.hpp"

namespace cecil {

enum class CodecMethod { identity, jpeg, webp, external };

inline std::string method_name(CodecMethod m) {
  switch (m) {
    case CodecMethod::identity: return "identity";
    case CodecMethod::jpeg: return "jpeg";
    case CodecMethod::webp: return "webp";
    case CodecMethod::external: return "external";
  }
  return "?";
}

inline CodecMethod method_from_name(const std::string& s) {
  if (s == "identity") return CodecMethod::identity;
  if (s == "jpeg") return CodecMethod::jpeg;
  if (s == "webp") return CodecMethod::webp;
  if (s == "external") return CodecMethod::external;
  throw ConfigError("unknown codec method: " + s);
}

struct CodecSpec {
  CodecMethod method = CodecMethod::identity;
  // jpeg/webp: the encoder quality knob (1..100). external: an opaque label
  // carried through reports; the external command itself fixes the rate.
  int quality = 0;
  std::string external_command;

  std::string id() const {
    std::string base = method_name(method) + "-q" + std::to_string(quality);
    if (method == CodecMethod::external) base += "-" + external_command;
    return base;
  }
  bool operator==(const CodecSpec& o) const {
    return method == o.method && quality == o.quality &&
           external_command == o.external_command;
  }
};

struct CompressedSample {
  std::vector<std::uint8_t> payload;
  std::uint64_t bits = 0;  // always 8 * payload.size()
  int height = 0;
  int width = 0;

  std::uint64_t pixel_count() const {
    return std::uint64_t(height) * std::uint64_t(width);
  }
};

inline void validate_quality(const CodecSpec& spec) {
  switch (spec.method) {
    case CodecMethod::identity:
      return;
    case CodecMethod::jpeg:
    case CodecMethod::webp:
      require<CodecError>(spec.quality >= 1 && spec.quality <= 100,
                          method_name(spec.method) + " quality must be in [1,100], got " +
                              std::to_string(spec.quality));
      return;
    case CodecMethod::external:
      require<CodecError>(!spec.external_command.empty(),
                          "external codec requires a command");
      return;
  }
}

namespace detail {

inline std::string sha256_hex(const std::uint8_t* data, std::size_t len) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int dlen = 0;
  EVP_Digest(data, len, digest, &dlen, EVP_sha256(), nullptr);
  std::ostringstream ss;
  for (unsigned int i = 0; i < dlen; ++i)
    ss << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return ss.str();
}

inline std::filesystem::path fresh_temp_dir(const std::string& tag) {
  static std::atomic<std::uint64_t> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("cecil-" + tag + "-" + std::to_string(::getpid()) + "-" +
              std::to_string(counter.fetch_add(1)));
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::vector<std::uint8_t> read_binary(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  require<CodecError>(bool(in), "cannot read: " + p.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

inline void write_binary(const std::filesystem::path& p,
                         std::span<const std::uint8_t> data) {
  std::ofstream out(p, std::ios::binary);
  require<CodecError>(bool(out), "cannot write: " + p.string());
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
}

// Runs an external codec subcommand with stderr captured into the error
// message on failure. Contract: `cmd enc in.png out.bin`, `cmd dec in.bin
// out.png`, exit code 0 on success.
inline void run_external(const std::string& command, const std::string& verb,
                         const std::filesystem::path& in,
                         const std::filesystem::path& out,
                         const std::filesystem::path& workdir) {
  auto errfile = workdir / "stderr.txt";
  std::string cmdline = command + " " + verb + " '" + in.string() + "' '" +
                        out.string() + "' 2>'" + errfile.string() + "'";
  int rc = std::system(cmdline.c_str());
  if (rc != 0) {
#ifdef WIFEXITED
    if (WIFEXITED(rc)) rc = WEXITSTATUS(rc);  // raw wait status -> exit code
#endif
    std::string err;
    if (std::filesystem::exists(errfile)) err = read_text_file(errfile);
    throw CodecError("external codec '" + command + " " + verb + "' exited with " +
                     std::to_string(rc) + (err.empty() ? "" : ": " + err));
  }
}

class ExternalCodecAdapter {
public:
  // Round-trips a probe image once per command before the command is
  // trusted for batch work.
  static void ensure_self_tested(const std::string& command);

  static CompressedSample encode(const Image& img, const std::string& command) {
    auto dir = fresh_temp_dir("enc");
    CompressedSample cs;
    try {
      cv::imwrite((dir / "in.png").string(), bgr_mat_from_image(img));
      run_external(command, "enc", dir / "in.png", dir / "out.bin", dir);
      cs.payload = read_binary(dir / "out.bin");
      cs.bits = std::uint64_t(cs.payload.size()) * 8;
      cs.height = img.height;
      cs.width = img.width;
    } catch (...) {
      std::filesystem::remove_all(dir);
      throw;
    }
    std::filesystem::remove_all(dir);
    return cs;
  }

  static Image decode(const CompressedSample& cs, const std::string& command) {
    auto dir = fresh_temp_dir("dec");
    Image img;
    try {
      write_binary(dir / "in.bin", cs.payload);
      run_external(command, "dec", dir / "in.bin", dir / "out.png", dir);
      cv::Mat bgr = cv::imread((dir / "out.png").string(), cv::IMREAD_COLOR);
      require<CodecError>(!bgr.empty(), "external codec produced an undecodable image");
      img = image_from_bgr_mat(bgr);
    } catch (...) {
      std::filesystem::remove_all(dir);
      throw;
    }
    std::filesystem::remove_all(dir);
    return img;
  }
};

}  // namespace detail

inline CompressedSample encode(const Image& img, const CodecSpec& spec);
inline Image decode(const CompressedSample& cs, const CodecSpec& spec);

inline void detail::ExternalCodecAdapter::ensure_self_tested(const std::string& command) {
  static std::mutex mu;
  static std::set<std::string> tested;
  {
    std::lock_guard<std::mutex> lock(mu);
    if (tested.count(command)) return;
  }
  Image probe(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      probe.at(y, x, 0) = std::uint8_t(16 * x);
      probe.at(y, x, 1) = std::uint8_t(16 * y);
      probe.at(y, x, 2) = std::uint8_t(8 * (x + y));
    }
  CompressedSample cs = detail::ExternalCodecAdapter::encode(probe, command);
  Image back = detail::ExternalCodecAdapter::decode(cs, command);
  require<CodecError>(back.same_shape(probe),
                      "external codec '" + command +
                          "' failed the round-trip self-test (shape changed)");
  std::lock_guard<std::mutex> lock(mu);
  tested.insert(command);
}

inline CompressedSample encode(const Image& img, const CodecSpec& spec) {
  require<CodecError>(img.height > 0 && img.width > 0 &&
                          img.rgb.size() == img.byte_size(),
                      "encode expects a non-empty 8-bit RGB image");
  validate_quality(spec);
  CompressedSample cs;
  cs.height = img.height;
  cs.width = img.width;
  switch (spec.method) {
    case CodecMethod::identity:
      cs.payload = img.rgb;
      break;
    case CodecMethod::jpeg:
    case CodecMethod::webp: {
      const char* ext = spec.method == CodecMethod::jpeg ? ".jpg" : ".webp";
      int flag = spec.method == CodecMethod::jpeg ? cv::IMWRITE_JPEG_QUALITY
                                                  : cv::IMWRITE_WEBP_QUALITY;
      std::vector<uchar> buf;
      bool ok = cv::imencode(ext, detail::bgr_mat_from_image(img), buf,
                             {flag, spec.quality});
      require<CodecError>(ok, std::string("imencode failed for ") + spec.id());
      cs.payload.assign(buf.begin(), buf.end());
      break;
    }
    case CodecMethod::external: {
      detail::ExternalCodecAdapter::ensure_self_tested(spec.external_command);
      cs = detail::ExternalCodecAdapter::encode(img, spec.external_command);
      break;
    }
  }
  cs.bits = std::uint64_t(cs.payload.size()) * 8;
  return cs;
}

inline Image decode(const CompressedSample& cs, const CodecSpec& spec) {
  validate_quality(spec);
  switch (spec.method) {
    case CodecMethod::identity: {
      require<CodecError>(cs.payload.size() == cs.pixel_count() * 3,
                          "identity payload size does not match dimensions");
      Image img(cs.height, cs.width);
      img.rgb = cs.payload;
      return img;
    }
    case CodecMethod::jpeg:
    case CodecMethod::webp: {
      cv::Mat buf(1, static_cast<int>(cs.payload.size()), CV_8U,
                  const_cast<std::uint8_t*>(cs.payload.data()));
      cv::Mat bgr = cv::imdecode(buf, cv::IMREAD_COLOR);
      require<CodecError>(!bgr.empty(), "corrupt payload for " + spec.id());
      Image img = detail::image_from_bgr_mat(bgr);
      require<CodecError>(img.height == cs.height && img.width == cs.width,
                          "decoded dimensions disagree with the compressed sample");
      return img;
    }
    case CodecMethod::external:
      return detail::ExternalCodecAdapter::decode(cs, spec.external_command);
  }
  throw CodecError("unreachable codec method");
}

// On-disk payload cache. Rate probes re-encode the same images many times;
// keying by content hash + codec id makes those hits free. Writes go
// through a temp file + rename, so concurrent writers of identical content
// are harmless.
class PayloadCache {
public:
  explicit PayloadCache(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
  }

  /// Cache root resolution: explicit argument, else $CECIL_CACHE_DIR, else none.
  static std::optional<PayloadCache> from_env() {
    if (const char* env = std::getenv("CECIL_CACHE_DIR"))
      return PayloadCache(std::filesystem::path(env));
    return std::nullopt;
  }

  std::optional<CompressedSample> get(const Image& img, const CodecSpec& spec) const {
    auto p = entry_path(img, spec);
    if (!std::filesystem::exists(p)) return std::nullopt;
    CompressedSample cs;
    cs.payload = detail::read_binary(p);
    cs.bits = std::uint64_t(cs.payload.size()) * 8;
    cs.height = img.height;
    cs.width = img.width;
    return cs;
  }

  void put(const Image& img, const CodecSpec& spec, const CompressedSample& cs) const {
    auto p = entry_path(img, spec);
    auto tmp = p;
    tmp += ".tmp" + std::to_string(::getpid());
    detail::write_binary(tmp, cs.payload);
    std::filesystem::rename(tmp, p);
  }

  const std::filesystem::path& root() const { return root_; }

private:
  std::filesystem::path entry_path(const Image& img, const CodecSpec& spec) const {
    std::string meta = std::to_string(img.height) + "x" + std::to_string(img.width) +
                       "|" + spec.id();
    std::vector<std::uint8_t> key(img.rgb);
    key.insert(key.end(), meta.begin(), meta.end());
    return root_ / (detail::sha256_hex(key.data(), key.size()) + ".bin");
  }

  std::filesystem::path root_;
};

/// Encode with an optional cache consulted first.
inline CompressedSample encode_cached(const Image& img, const CodecSpec& spec,
                                      const PayloadCache* cache) {
  if (cache) {
    if (auto hit = cache->get(img, spec)) return *hit;
  }
  CompressedSample cs = encode(img, spec);
  if (cache) cache->put(img, spec, cs);
  return cs;
}

struct RateSample {
  std::uint64_t bits = 0;
  std::uint64_t pixels = 0;
};

// Pooled data rate: total bits across all images divided by total pixels.
// Deliberately not the mean of per-image ratios; the two differ whenever
// image sizes vary.
inline double pooled_bpp(std::span<const RateSample> samples) {
  require(!samples.empty(), "pooled_bpp over an empty set");
  std::uint64_t bits = 0, pixels = 0;
  for (const auto& s : samples) {
    bits += s.bits;
    pixels += s.pixels;
  }
  require(pixels > 0, "pooled_bpp with zero pixels");
  return double(bits) / double(pixels);
}

/// Pooled bpp of a split's stored (encoded) form.
inline double pooled_encoded_bpp(const std::vector<Sample>& split) {
  std::vector<RateSample> rs;
  rs.reserve(split.size());
  for (const auto& s : split) rs.push_back({s.encoded_bits, s.image.pixel_count()});
  return pooled_bpp(rs);
}

/// Pooled bpp of a split's source form on disk.
inline double pooled_source_bpp(const std::vector<Sample>& split) {
  std::vector<RateSample> rs;
  rs.reserve(split.size());
  for (const auto& s : split) rs.push_back({s.source_bits, s.image.pixel_count()});
  return pooled_bpp(rs);
}

/// Mean bpp of the train split under `spec`, by the pooled definition.
inline double dataset_bpp(const DatasetHandle& ds, const CodecSpec& spec,
                          const PayloadCache* cache = nullptr) {
  require(!ds.train.empty(), "dataset_bpp on an empty dataset");
  std::vector<RateSample> rs;
  rs.reserve(ds.train.size());
  for (const auto& s : ds.train) {
    CompressedSample cs = encode_cached(s.image, spec, cache);
    rs.push_back({cs.bits, cs.pixel_count()});
  }
  return pooled_bpp(rs);
}

struct RatePoint {
  CodecSpec codec;
  double mean_bpp = 0;
  double mean_psnr = 0;  // mean of per-image PSNR; +inf for lossless
};

/// One rate-distortion point: pooled bpp plus mean PSNR of the round trip.
inline RatePoint rate_point(const std::vector<Sample>& split, const CodecSpec& spec,
                            const PayloadCache* cache = nullptr) {
  require(!split.empty(), "rate_point over an empty split");
  std::vector<RateSample> rs;
  double psnr_acc = 0;
  bool any_inf = false;
  for (const auto& s : split) {
    CompressedSample cs = encode_cached(s.image, spec, cache);
    Image back = decode(cs, spec);
    double p = image_psnr(s.image, back);
    if (std::isinf(p)) any_inf = true;
    else psnr_acc += p;
    rs.push_back({cs.bits, cs.pixel_count()});
  }
  RatePoint pt;
  pt.codec = spec;
  pt.mean_bpp = pooled_bpp(rs);
  pt.mean_psnr = any_inf ? std::numeric_limits<double>::infinity()
                         : psnr_acc / double(split.size());
  return pt;
}

/// RD sweep for one method across a quality grid, sorted by bpp ascending.
inline std::vector<RatePoint> rd_curve(const DatasetHandle& ds, CodecMethod method,
                                       std::span<const int> qualities,
                                       const std::string& external_command = "",
                                       const PayloadCache* cache = nullptr) {
  require(!qualities.empty(), "rd_curve needs a non-empty quality grid");
  std::vector<RatePoint> points;
  for (int q : qualities) {
    CodecSpec spec{method, q, external_command};
    try {
      points.push_back(rate_point(ds.train, spec, cache));
    } catch (const CodecError& e) {
      throw CodecError(spec.id() + ": " + e.what());
    }
  }
  std::sort(points.begin(), points.end(),
            [](const RatePoint& a, const RatePoint& b) { return a.mean_bpp < b.mean_bpp; });
  return points;
}

/// CSV columns: method, quality, bpp, psnr.
inline void write_rd_csv(const std::filesystem::path& path,
                         std::span<const RatePoint> points) {
  CsvWriter csv(path);
  csv.row({"method", "quality", "bpp", "psnr"});
  for (const auto& p : points)
    csv.row({method_name(p.codec.method), std::to_string(p.codec.quality),
             format_double(p.mean_bpp), format_double(p.mean_psnr)});
}

inline void write_rd_plot(const std::filesystem::path& path,
                          const std::vector<std::vector<RatePoint>>& curves) {
  SvgPlot plot("Rate-distortion", "bpp", "PSNR (dB)");
  const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  int i = 0;
  for (const auto& curve : curves) {
    if (curve.empty()) continue;
    SvgPlot::Series s;
    s.label = method_name(curve.front().codec.method);
    s.color = palette[i++ % 5];
    for (const auto& p : curve) {
      if (!std::isfinite(p.mean_psnr)) continue;
      s.x.push_back(p.mean_bpp);
      s.y.push_back(p.mean_psnr);
    }
    plot.add_series(std::move(s));
  }
  plot.save(path);
}

}  // namespace cecil
