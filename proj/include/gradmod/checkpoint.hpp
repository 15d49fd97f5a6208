#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "gradmod/tensor.hpp"

namespace gradmod {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Named tensors plus string metadata. On disk:
///
///   "GRADMODC" | u32 version | str kind | u64 n_meta | (str key, str value)*
///   | u64 n_tensors | (str name, u32 ndim, u64 dims[ndim], f64 values[])*
///
/// where str is a u32 length followed by bytes. All integers and doubles are
/// little-endian; doubles are stored bit-for-bit.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string kind;
  std::map<std::string, std::string> meta;
  std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gradmod
