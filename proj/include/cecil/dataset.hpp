#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cecil/common.hpp"
#include "cecil/image.hpp"

namespace cecil {

struct Sample {
  Image image;
  int label = -1;
  // Bits of the sample in its source form on disk (file size for image
  // files, 24 bpp for raw arrays). Basis for the original-data rate.
  std::uint64_t source_bits = 0;
  // Bits of the stored (possibly codec-compressed) form. Equals source_bits
  // until a preprocessing pass replaces it.
  std::uint64_t encoded_bits = 0;
};

struct DatasetHandle {
  std::string name;
  int num_classes = 0;
  std::vector<Sample> train;
  std::vector<Sample> test;
  std::vector<std::string> class_names;  // index = contiguous class id
};

inline std::vector<std::size_t> label_histogram(const std::vector<Sample>& split,
                                                int num_classes) {
  std::vector<std::size_t> h(static_cast<std::size_t>(num_classes), 0);
  for (const auto& s : split) h[static_cast<std::size_t>(s.label)]++;
  return h;
}

/// Train-split indices grouped by class id.
inline std::vector<std::vector<int>> indices_by_class(
    const std::vector<Sample>& split, int num_classes) {
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(num_classes));
  for (int i = 0; i < static_cast<int>(split.size()); ++i) {
    int label = split[static_cast<std::size_t>(i)].label;
    require(label >= 0 && label < num_classes,
            "sample label " + std::to_string(label) + " outside [0, " +
                std::to_string(num_classes) + ")");
    by_class[static_cast<std::size_t>(label)].push_back(i);
  }
  return by_class;
}

inline void validate_dataset(const DatasetHandle& ds) {
  require<ConfigError>(ds.num_classes > 0, "dataset has no classes");
  require<ConfigError>(!ds.train.empty() && !ds.test.empty(),
                       "dataset '" + ds.name + "' is missing a train or test split");
  auto ht = label_histogram(ds.train, ds.num_classes);
  auto he = label_histogram(ds.test, ds.num_classes);
  for (int c = 0; c < ds.num_classes; ++c) {
    if (ht[static_cast<std::size_t>(c)] == 0 || he[static_cast<std::size_t>(c)] == 0)
      throw ConfigError("class " + std::to_string(c) +
                        " is absent from one of the splits of '" + ds.name + "'");
  }
  for (const auto* split : {&ds.train, &ds.test})
    for (const auto& s : *split) {
      require<ConfigError>(s.label >= 0 && s.label < ds.num_classes,
                           "label out of range in '" + ds.name + "'");
      require<ConfigError>(s.image.height > 0 && s.image.width > 0 &&
                               s.image.rgb.size() == s.image.byte_size(),
                           "non-RGB or empty image in '" + ds.name + "'");
    }
}

namespace detail {

inline Image image_from_bgr_mat(const cv::Mat& bgr) {
  require<CodecError>(!bgr.empty() && bgr.type() == CV_8UC3,
                      "expected an 8-bit 3-channel image");
  Image img(bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y)
    for (int x = 0; x < bgr.cols; ++x) {
      const auto& px = bgr.at<cv::Vec3b>(y, x);
      img.at(y, x, 0) = px[2];
      img.at(y, x, 1) = px[1];
      img.at(y, x, 2) = px[0];
    }
  return img;
}

inline cv::Mat bgr_mat_from_image(const Image& img) {
  cv::Mat m(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      m.at<cv::Vec3b>(y, x) = cv::Vec3b(img.at(y, x, 2), img.at(y, x, 1), img.at(y, x, 0));
  return m;
}

inline bool has_image_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".webp" ||
         ext == ".bmp";
}

inline std::vector<Sample> load_folder_split(const std::filesystem::path& split_dir,
                                             const std::vector<std::string>& class_names) {
  std::vector<Sample> out;
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    auto cls_dir = split_dir / class_names[c];
    require<ConfigError>(std::filesystem::is_directory(cls_dir),
                         "class folder missing: " + cls_dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(cls_dir))
      if (e.is_regular_file() && has_image_extension(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      cv::Mat bgr = cv::imread(f.string(), cv::IMREAD_COLOR);
      require<ConfigError>(!bgr.empty(), "undecodable image: " + f.string());
      Sample s;
      s.image = image_from_bgr_mat(bgr);
      s.label = static_cast<int>(c);
      s.source_bits = std::uint64_t(std::filesystem::file_size(f)) * 8;
      s.encoded_bits = s.source_bits;
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace detail

// Directory-of-class-folders layout:
//   root/train/<class_name>/*.png|jpg|...   root/test/<class_name>/...
// Class names are sorted and remapped to contiguous ids 0..C-1.
inline DatasetHandle load_class_folders(const std::filesystem::path& root,
                                        const std::string& name = "") {
  require<ConfigError>(std::filesystem::is_directory(root / "train") &&
                           std::filesystem::is_directory(root / "test"),
                       "expected train/ and test/ under " + root.string());
  std::set<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(root / "train"))
    if (e.is_directory()) names.insert(e.path().filename().string());
  require<ConfigError>(!names.empty(), "no class folders under " + (root / "train").string());

  DatasetHandle ds;
  ds.name = name.empty() ? root.filename().string() : name;
  ds.class_names.assign(names.begin(), names.end());
  ds.num_classes = static_cast<int>(ds.class_names.size());
  ds.train = detail::load_folder_split(root / "train", ds.class_names);
  ds.test = detail::load_folder_split(root / "test", ds.class_names);
  validate_dataset(ds);
  return ds;
}

// Packed binary array layout, one file per split (train.bin / test.bin):
//   magic "CECILPK1" | u32 count | u32 height | u32 width | u32 channels(=3)
//   then per record: u32 label | height*width*3 RGB bytes
// Little-endian throughout. Raw arrays are accounted at 24 bpp.
inline constexpr char kPackedMagic[8] = {'C', 'E', 'C', 'I', 'L', 'P', 'K', '1'};

inline void write_packed_split(const std::filesystem::path& file,
                               const std::vector<Sample>& split) {
  std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  require(bool(out), "cannot open for writing: " + file.string());
  require(!split.empty(), "refusing to write an empty packed split");
  auto w32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  out.write(kPackedMagic, 8);
  w32(static_cast<std::uint32_t>(split.size()));
  w32(static_cast<std::uint32_t>(split[0].image.height));
  w32(static_cast<std::uint32_t>(split[0].image.width));
  w32(3);
  for (const auto& s : split) {
    require(s.image.same_shape(split[0].image),
            "packed format requires uniform image dimensions");
    w32(static_cast<std::uint32_t>(s.label));
    out.write(reinterpret_cast<const char*>(s.image.rgb.data()),
              static_cast<std::streamsize>(s.image.rgb.size()));
  }
}

inline std::vector<Sample> read_packed_split(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  require<ConfigError>(bool(in), "cannot open packed split: " + file.string());
  char magic[8];
  in.read(magic, 8);
  require<ConfigError>(in && std::memcmp(magic, kPackedMagic, 8) == 0,
                       "bad magic in " + file.string());
  auto r32 = [&]() {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  std::uint32_t count = r32(), h = r32(), w = r32(), ch = r32();
  require<ConfigError>(ch == 3, "packed split must be 3-channel RGB");
  require<ConfigError>(count > 0 && h > 0 && w > 0, "empty packed split");
  std::vector<Sample> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Sample s;
    s.label = static_cast<int>(r32());
    s.image = Image(static_cast<int>(h), static_cast<int>(w));
    in.read(reinterpret_cast<char*>(s.image.rgb.data()),
            static_cast<std::streamsize>(s.image.rgb.size()));
    require<ConfigError>(bool(in), "truncated packed split: " + file.string());
    s.source_bits = s.image.byte_size() * 8;
    s.encoded_bits = s.source_bits;
    out.push_back(std::move(s));
  }
  return out;
}

inline void write_packed(const DatasetHandle& ds, const std::filesystem::path& dir) {
  write_packed_split(dir / "train.bin", ds.train);
  write_packed_split(dir / "test.bin", ds.test);
}

inline DatasetHandle load_packed(const std::filesystem::path& dir,
                                 const std::string& name = "") {
  DatasetHandle ds;
  ds.name = name.empty() ? dir.filename().string() : name;
  ds.train = read_packed_split(dir / "train.bin");
  ds.test = read_packed_split(dir / "test.bin");
  // Remap whatever label ids the file uses to contiguous 0..C-1.
  std::set<int> labels;
  for (const auto& s : ds.train) labels.insert(s.label);
  for (const auto& s : ds.test) labels.insert(s.label);
  std::map<int, int> remap;
  for (int l : labels) {
    int id = static_cast<int>(remap.size());
    remap[l] = id;
    ds.class_names.push_back(std::to_string(l));
  }
  for (auto* split : {&ds.train, &ds.test})
    for (auto& s : *split) s.label = remap.at(s.label);
  ds.num_classes = static_cast<int>(remap.size());
  validate_dataset(ds);
  return ds;
}

}  // namespace cecil
