#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "flare/grad/tensor.hpp"

namespace flare::grad {

// Ordered name -> tensor registry; names must be unique.
struct ParamStore {
  std::vector<std::pair<std::string, Tensor>> items;
  std::unordered_map<std::string, size_t> index;

  Tensor& add(const std::string& name, Tensor t);
  Tensor* find(const std::string& name);
  const Tensor* find(const std::string& name) const;
  std::vector<Tensor> tensors() const;
  int64_t param_count() const;
};

// Binary container: magic "FLRB", version u32, tensor count u32, then per
// tensor {name length u32, UTF-8 name, rank u32, shape u32s, float32 payload}.
// Little-endian throughout; round-trips bit-exactly.
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& tensors);
std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path);

constexpr uint32_t kCheckpointVersion = 1;

}  // namespace flare::grad
