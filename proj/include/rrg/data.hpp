// Synthetic dataset generation, manifest I/O, and the 7:1:2 split.

#ifndef RRG_DATA_HPP
#define RRG_DATA_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace rrg {

inline constexpr int kNumLabels = 14;
inline constexpr int kNoFindingIndex = 13;

extern const std::array<const char*, kNumLabels> kLabelNames;

struct SampleRecord {
  std::string id;
  std::string image_path;  // relative to the manifest directory
  std::string report;
  std::array<bool, kNumLabels> labels{};
  std::string split;  // train | val | test

  bool no_finding() const { return labels[kNoFindingIndex]; }
};

// Single-channel float image grid.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;  // row-major

  float& at(int h, int w) { return pixels[h * width + w]; }
  float at(int h, int w) const { return pixels[h * width + w]; }
};

// Raw image file: "RRGIMG1\n", then u32 H, u32 W, then H*W f32, all
// little-endian.
void save_image(const Image& img, const std::string& path);
Image load_image(const std::string& path);

// Tab-separated manifest, one record per line:
//   id <TAB> image_path <TAB> report(escaped) <TAB> labels(14 x 0/1) <TAB> split
// Reports escape backslash, tab, and newline as \\ \t \n. UTF-8, LF endings.
// Lines starting with '#' are header comments.
void save_manifest(const std::vector<SampleRecord>& records,
                   const std::string& path,
                   const std::vector<std::string>& header_comments = {});
std::vector<SampleRecord> load_manifest(const std::string& path);

struct SyntheticConfig {
  int sample_count = 200;
  int image_size = 32;
  double prevalence = 0.5;  // probability of a positive (diseased) sample
  std::uint64_t seed = 0;
  std::string out_dir;
};

struct SyntheticDataset {
  std::vector<SampleRecord> records;
  std::vector<Image> images;  // parallel to records
  int positive_count = 0;
};

// Positive samples carry a bright blob whose quadrant selects the disease
// phrase; negatives lack it. A background intensity level encodes the
// phrasing variant so reports stay a deterministic function of the image.
// Positive reports start with the literal token "Note".
SyntheticDataset generate_synthetic_dataset(const SyntheticConfig& cfg);

// Generates and writes manifest + images under cfg.out_dir.
void write_synthetic_dataset(const SyntheticConfig& cfg);

struct DatasetSplit {
  std::vector<std::string> train, val, test;
};

// Seeded shuffle then contiguous slices; floor allocation with the
// remainder assigned to train.
DatasetSplit split_dataset(const std::vector<std::string>& ids,
                           const std::array<double, 3>& ratios,
                           std::uint64_t seed);

// Applies a split in place by rewriting each record's split tag.
void apply_split(std::vector<SampleRecord>& records, const DatasetSplit& split);

}  // namespace rrg

#endif
