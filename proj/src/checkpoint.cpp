#include "gradmod/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace gradmod {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'G', 'R', 'A', 'D', 'M', 'O', 'D', 'C'};

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_str(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <class T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("checkpoint: truncated file");
  return v;
}

std::string get_str(std::istream& is) {
  const auto n = get<std::uint32_t>(is);
  if (n > (1u << 20)) throw IoError("checkpoint: implausible string length");
  std::string s(n, '\0');
  if (!is.read(s.data(), n)) throw IoError("checkpoint: truncated file");
  return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, Checkpoint::kVersion);
  put_str(os, ckpt.kind);
  put<std::uint64_t>(os, ckpt.meta.size());
  for (const auto& [k, v] : ckpt.meta) {
    put_str(os, k);
    put_str(os, v);
  }
  put<std::uint64_t>(os, ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) {
    put_str(os, name);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.ndim()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(os, d);
    const auto v = t.values();
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!os) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[sizeof kMagic];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw IoError(path.string() + " is not a checkpoint");
  const auto version = get<std::uint32_t>(is);
  if (version != Checkpoint::kVersion)
    throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.kind = get_str(is);
  const auto n_meta = get<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < n_meta; ++i) {
    std::string k = get_str(is);
    ckpt.meta[k] = get_str(is);
  }
  const auto n_tensors = get<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    std::string name = get_str(is);
    const auto ndim = get<std::uint32_t>(is);
    if (ndim == 0 || ndim > 8) throw IoError("checkpoint: bad rank for " + name);
    Shape shape(ndim);
    for (auto& d : shape) d = get<std::uint64_t>(is);
    std::vector<double> values(numel(shape));
    if (!is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double))))
      throw IoError("checkpoint: truncated data for " + name);
    ckpt.tensors.emplace(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return ckpt;
}

}  // namespace gradmod
