#include "rrg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <stdexcept>

namespace rrg {

const std::array<const char*, kNumLabels> kLabelNames = {
    "Enlarged Cardiomediastinum",
    "Cardiomegaly",
    "Lung Opacity",
    "Lung Lesion",
    "Edema",
    "Consolidation",
    "Pneumonia",
    "Atelectasis",
    "Pneumothorax",
    "Pleural Effusion",
    "Pleural Other",
    "Fracture",
    "Support Devices",
    "No Finding",
};

namespace {

void write_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  f.write(reinterpret_cast<char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& f) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  if (!f) throw std::runtime_error("image file truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::string escape_report(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '\\')
      out += "\\\\";
    else if (c == '\t')
      out += "\\t";
    else if (c == '\n')
      out += "\\n";
    else
      out.push_back(c);
  }
  return out;
}

std::string unescape_report(const std::string& s) {
  std::string out;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      char n = s[++i];
      if (n == 't')
        out.push_back('\t');
      else if (n == 'n')
        out.push_back('\n');
      else
        out.push_back(n);
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

constexpr int kVariants = 4;

// Disease phrase and the label it implies, per variant.
struct VariantSpec {
  const char* disease_sentence;
  int label_index;
  const char* normal_sentence;
};

const VariantSpec kVariantSpecs[kVariants] = {
    {"mild cardiomegaly with stable heart contour", 1,
     "heart size is normal"},
    {"interstitial edema in the lower lobes", 4,
     "the mediastinum is unremarkable"},
    {"patchy pneumonia in the right lung", 6,
     "no focal abnormality is seen"},
    {"small pleural effusion at the left base", 9,
     "bony structures are intact"},
};

}  // namespace

void save_image(const Image& img, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_image: cannot open " + path);
  f.write("RRGIMG1\n", 8);
  write_u32(f, static_cast<std::uint32_t>(img.height));
  write_u32(f, static_cast<std::uint32_t>(img.width));
  static_assert(sizeof(float) == 4);
  f.write(reinterpret_cast<const char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size() * 4));
}

Image load_image(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_image: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, "RRGIMG1\n", 8) != 0)
    throw std::runtime_error("load_image: bad magic in " + path);
  Image img;
  img.height = static_cast<int>(read_u32(f));
  img.width = static_cast<int>(read_u32(f));
  img.pixels.resize(static_cast<size_t>(img.height) * img.width);
  f.read(reinterpret_cast<char*>(img.pixels.data()),
         static_cast<std::streamsize>(img.pixels.size() * 4));
  if (!f) throw std::runtime_error("load_image: truncated " + path);
  return img;
}

void save_manifest(const std::vector<SampleRecord>& records,
                   const std::string& path,
                   const std::vector<std::string>& header_comments) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_manifest: cannot open " + path);
  for (const auto& c : header_comments) f << "# " << c << "\n";
  for (const auto& r : records) {
    f << r.id << '\t' << r.image_path << '\t' << escape_report(r.report) << '\t';
    for (bool b : r.labels) f << (b ? '1' : '0');
    f << '\t' << r.split << '\n';
  }
}

std::vector<SampleRecord> load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_manifest: cannot open " + path);
  std::vector<SampleRecord> out;
  std::set<std::string> seen_ids;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_fields(line);
    if (fields.size() != 5)
      throw std::runtime_error("load_manifest: parse error at line " +
                               std::to_string(lineno) + ": expected 5 fields, got " +
                               std::to_string(fields.size()));
    SampleRecord r;
    r.id = fields[0];
    r.image_path = fields[1];
    r.report = unescape_report(fields[2]);
    if (fields[3].size() != kNumLabels)
      throw std::runtime_error("load_manifest: parse error at line " +
                               std::to_string(lineno) + ": expected " +
                               std::to_string(kNumLabels) + " label flags");
    for (int i = 0; i < kNumLabels; ++i) {
      if (fields[3][i] != '0' && fields[3][i] != '1')
        throw std::runtime_error("load_manifest: parse error at line " +
                                 std::to_string(lineno) + ": bad label flag");
      r.labels[i] = fields[3][i] == '1';
    }
    r.split = fields[4];
    if (r.split != "train" && r.split != "val" && r.split != "test")
      throw std::runtime_error("load_manifest: parse error at line " +
                               std::to_string(lineno) + ": bad split tag '" +
                               r.split + "'");
    if (!seen_ids.insert(r.id).second)
      throw std::runtime_error("load_manifest: duplicate id '" + r.id +
                               "' at line " + std::to_string(lineno));
    out.push_back(std::move(r));
  }
  return out;
}

SyntheticDataset generate_synthetic_dataset(const SyntheticConfig& cfg) {
  if (!(cfg.prevalence > 0.0 && cfg.prevalence < 1.0))
    throw std::invalid_argument("generate_synthetic_dataset: prevalence must be in (0,1)");
  if (cfg.image_size < 8)
    throw std::invalid_argument("generate_synthetic_dataset: image size must be >= 8");
  if (cfg.sample_count < 1)
    throw std::invalid_argument("generate_synthetic_dataset: sample count must be >= 1");

  std::mt19937_64 rng(cfg.seed);
  SyntheticDataset ds;
  const int S = cfg.image_size;
  for (int i = 0; i < cfg.sample_count; ++i) {
    bool positive =
        (rng() >> 11) * 0x1.0p-53 < cfg.prevalence;  // top-53-bit uniform
    int variant = static_cast<int>(rng() % kVariants);
    const auto& spec = kVariantSpecs[variant];

    Image img;
    img.height = S;
    img.width = S;
    img.pixels.assign(static_cast<size_t>(S) * S, 0.0f);
    float bg = 0.1f + 0.2f * static_cast<float>(variant);
    for (int h = 0; h < S; ++h)
      for (int w = 0; w < S; ++w) {
        // Deterministic per-pixel texture keyed by sample index and position.
        std::uint64_t key = (static_cast<std::uint64_t>(i) << 32) ^
                            (static_cast<std::uint64_t>(h) << 16) ^
                            static_cast<std::uint64_t>(w);
        key *= 0x9e3779b97f4a7c15ull;
        key ^= key >> 29;
        float jitter = static_cast<float>(key & 0xffff) / 65535.0f * 0.02f;
        img.at(h, w) = bg + jitter;
      }
    if (positive) {
      // Bright blob centered in quadrant `variant`.
      int ch = (variant / 2 == 0 ? S / 4 : 3 * S / 4);
      int cw = (variant % 2 == 0 ? S / 4 : 3 * S / 4);
      float radius = static_cast<float>(S) / 8.0f;
      for (int h = 0; h < S; ++h)
        for (int w = 0; w < S; ++w) {
          float dh = static_cast<float>(h - ch), dw = static_cast<float>(w - cw);
          float r2 = (dh * dh + dw * dw) / (radius * radius);
          if (r2 < 4.0f) img.at(h, w) += 2.0f * std::exp(-r2);
        }
    }

    SampleRecord r;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "s%05d", i);
    r.id = idbuf;
    r.image_path = std::string("images/") + idbuf + ".img";
    if (positive) {
      r.report = std::string("Note : findings show ") + spec.disease_sentence + " .";
      r.labels[spec.label_index] = true;
      ++ds.positive_count;
    } else {
      r.report = std::string("the lungs are clear . ") + spec.normal_sentence + " .";
      r.labels[kNoFindingIndex] = true;
    }
    r.split = "train";  // rewritten by apply_split
    ds.records.push_back(std::move(r));
    ds.images.push_back(std::move(img));
  }
  return ds;
}

void write_synthetic_dataset(const SyntheticConfig& cfg) {
  namespace fs = std::filesystem;
  if (cfg.out_dir.empty())
    throw std::invalid_argument("write_synthetic_dataset: out_dir required");
  SyntheticDataset ds = generate_synthetic_dataset(cfg);

  std::vector<std::string> ids;
  for (const auto& r : ds.records) ids.push_back(r.id);
  DatasetSplit split = split_dataset(ids, {0.7, 0.1, 0.2}, cfg.seed);
  apply_split(ds.records, split);

  fs::create_directories(fs::path(cfg.out_dir) / "images");
  for (size_t i = 0; i < ds.records.size(); ++i)
    save_image(ds.images[i],
               (fs::path(cfg.out_dir) / ds.records[i].image_path).string());
  save_manifest(ds.records, (fs::path(cfg.out_dir) / "manifest.tsv").string(),
                {"positives=" + std::to_string(ds.positive_count),
                 "seed=" + std::to_string(cfg.seed),
                 "samples=" + std::to_string(cfg.sample_count)});
}

DatasetSplit split_dataset(const std::vector<std::string>& ids,
                           const std::array<double, 3>& ratios,
                           std::uint64_t seed) {
  if (ids.empty()) throw std::invalid_argument("split_dataset: empty id list");
  double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("split_dataset: ratios must sum to 1");

  std::vector<std::string> shuffled = ids;
  std::mt19937_64 rng(seed);
  for (size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[rng() % i]);

  const auto n = static_cast<std::int64_t>(ids.size());
  auto n_train = static_cast<std::int64_t>(std::floor(n * ratios[0]));
  auto n_val = static_cast<std::int64_t>(std::floor(n * ratios[1]));
  auto n_test = static_cast<std::int64_t>(std::floor(n * ratios[2]));
  n_train += n - (n_train + n_val + n_test);  // remainder to train

  DatasetSplit out;
  out.train.assign(shuffled.begin(), shuffled.begin() + n_train);
  out.val.assign(shuffled.begin() + n_train, shuffled.begin() + n_train + n_val);
  out.test.assign(shuffled.begin() + n_train + n_val, shuffled.end());
  return out;
}

void apply_split(std::vector<SampleRecord>& records, const DatasetSplit& split) {
  std::set<std::string> val(split.val.begin(), split.val.end());
  std::set<std::string> test(split.test.begin(), split.test.end());
  for (auto& r : records)
    r.split = test.count(r.id) ? "test" : val.count(r.id) ? "val" : "train";
}

}  // namespace rrg
