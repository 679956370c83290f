#include "flare/grad/checkpoint.hpp"

#include <cstdio>
#include <cstring>

#include "flare/error.hpp"

namespace flare::grad {

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (index.count(name)) throw ContractError("duplicate parameter name: " + name);
  index[name] = items.size();
  items.emplace_back(name, std::move(t));
  return items.back().second;
}

Tensor* ParamStore::find(const std::string& name) {
  auto it = index.find(name);
  return it == index.end() ? nullptr : &items[it->second].second;
}

const Tensor* ParamStore::find(const std::string& name) const {
  auto it = index.find(name);
  return it == index.end() ? nullptr : &items[it->second].second;
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(items.size());
  for (const auto& [_, t] : items) out.push_back(t);
  return out;
}

int64_t ParamStore::param_count() const {
  int64_t n = 0;
  for (const auto& [_, t] : items) n += t.size();
  return n;
}

namespace {
struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_u32(std::FILE* f, uint32_t v) {
  if (std::fwrite(&v, 4, 1, f) != 1) throw CheckpointError("checkpoint write failed");
}

uint32_t read_u32(std::FILE* f, const std::string& path) {
  uint32_t v;
  if (std::fread(&v, 4, 1, f) != 1)
    throw CheckpointError("truncated checkpoint: " + path);
  return v;
}
}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& tensors) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw CheckpointError("cannot open for write: " + path);
  if (std::fwrite("FLRB", 1, 4, f.get()) != 4)
    throw CheckpointError("checkpoint write failed: " + path);
  write_u32(f.get(), kCheckpointVersion);
  write_u32(f.get(), static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    write_u32(f.get(), static_cast<uint32_t>(name.size()));
    if (!name.empty() && std::fwrite(name.data(), 1, name.size(), f.get()) != name.size())
      throw CheckpointError("checkpoint write failed: " + path);
    write_u32(f.get(), static_cast<uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); i++) write_u32(f.get(), static_cast<uint32_t>(t.dim(i)));
    size_t n = static_cast<size_t>(t.size());
    if (n && std::fwrite(t.data(), sizeof(float), n, f.get()) != n)
      throw CheckpointError("checkpoint write failed: " + path);
  }
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw CheckpointError("cannot open checkpoint: " + path);
  char magic[4];
  if (std::fread(magic, 1, 4, f.get()) != 4 || std::memcmp(magic, "FLRB", 4) != 0)
    throw CheckpointError("bad magic (not a checkpoint): " + path);
  uint32_t version = read_u32(f.get(), path);
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                          ": " + path);
  uint32_t count = read_u32(f.get(), path);
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(count);
  for (uint32_t i = 0; i < count; i++) {
    uint32_t name_len = read_u32(f.get(), path);
    std::string name(name_len, '\0');
    if (name_len && std::fread(name.data(), 1, name_len, f.get()) != name_len)
      throw CheckpointError("truncated checkpoint: " + path);
    uint32_t rank = read_u32(f.get(), path);
    Shape shape(rank);
    int64_t n = 1;
    for (uint32_t r = 0; r < rank; r++) {
      shape[r] = static_cast<int>(read_u32(f.get(), path));
      n *= shape[r];
    }
    std::vector<float> data(static_cast<size_t>(n));
    if (n && std::fread(data.data(), sizeof(float), static_cast<size_t>(n), f.get()) !=
                 static_cast<size_t>(n))
      throw CheckpointError("truncated checkpoint: " + path);
    out.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(data)));
  }
  return out;
}

}  // namespace flare::grad
