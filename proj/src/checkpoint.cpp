#include "rrg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace rrg {

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
  if (!f) throw std::runtime_error("checkpoint truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}
}  // namespace

void save_checkpoint(const NamedParams& params, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  f.write("RRGCKPT1", 8);
  write_u32(f, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    write_u32(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(f, static_cast<std::uint32_t>(t.shape().size()));
    for (int d : t.shape()) write_u32(f, static_cast<std::uint32_t>(d));
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
}

void load_checkpoint(NamedParams& params, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, "RRGCKPT1", 8) != 0)
    throw std::runtime_error("load_checkpoint: bad magic");
  std::uint32_t count = read_u32(f);
  std::map<std::string, std::pair<ag::Shape, std::vector<double>>> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t name_len = read_u32(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    std::uint32_t ndim = read_u32(f);
    ag::Shape shape(ndim);
    for (auto& d : shape) d = static_cast<int>(read_u32(f));
    std::vector<double> data(static_cast<size_t>(ag::numel(shape)));
    f.read(reinterpret_cast<char*>(data.data()),
           static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!f) throw std::runtime_error("load_checkpoint: truncated");
    entries[name] = {std::move(shape), std::move(data)};
  }
  for (auto& [name, t] : params) {
    auto it = entries.find(name);
    if (it == entries.end())
      throw std::runtime_error("load_checkpoint: missing parameter " + name);
    if (it->second.first != t.shape())
      throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
    std::copy(it->second.second.begin(), it->second.second.end(), t.data());
  }
}

}  // namespace rrg
