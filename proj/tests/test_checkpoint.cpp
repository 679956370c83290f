#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "flare/error.hpp"
#include "flare/grad/checkpoint.hpp"

using namespace flare;
using namespace flare::grad;
namespace fs = std::filesystem;

namespace {
std::string tmp_path(const char* name) {
  return (fs::temp_directory_path() / name).string();
}

std::string read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}
}  // namespace

TEST_CASE("checkpoint round-trips bit-exactly") {
  Rng rng(77);
  std::vector<std::pair<std::string, Tensor>> tensors;
  tensors.emplace_back("embed.cell", Tensor::randn({10, 4}, rng, 1.f));
  tensors.emplace_back("head.w", Tensor::randn({4, 3}, rng, 0.02f));
  tensors.emplace_back("head.b", Tensor::zeros({3}));
  // Exercise odd values: denormals, negative zero, exact powers of two.
  tensors[0].second.data()[0] = -0.f;
  tensors[0].second.data()[1] = 1e-42f;
  tensors[0].second.data()[2] = 65536.f;

  std::string p1 = tmp_path("ck_roundtrip1.flrb");
  std::string p2 = tmp_path("ck_roundtrip2.flrb");
  save_checkpoint(p1, tensors);
  auto loaded = load_checkpoint(p1);
  REQUIRE(loaded.size() == tensors.size());
  for (size_t i = 0; i < tensors.size(); i++) {
    CHECK(loaded[i].first == tensors[i].first);
    REQUIRE(loaded[i].second.shape() == tensors[i].second.shape());
    for (int64_t j = 0; j < tensors[i].second.size(); j++) {
      uint32_t a, b;
      std::memcpy(&a, &tensors[i].second.data()[j], 4);
      std::memcpy(&b, &loaded[i].second.data()[j], 4);
      CHECK(a == b);
    }
  }
  save_checkpoint(p2, loaded);
  CHECK(read_bytes(p1) == read_bytes(p2));
  fs::remove(p1);
  fs::remove(p2);
}

TEST_CASE("checkpoint header starts with the FLRB magic") {
  std::string p = tmp_path("ck_magic.flrb");
  save_checkpoint(p, {{"x", Tensor::zeros({1})}});
  std::string bytes = read_bytes(p);
  REQUIRE(bytes.size() >= 12);
  CHECK(bytes.substr(0, 4) == "FLRB");
  fs::remove(p);
}

TEST_CASE("loading a non-checkpoint file fails with a clear error") {
  std::string p = tmp_path("ck_bad.flrb");
  std::ofstream(p) << "not a checkpoint at all";
  CHECK_THROWS_AS(load_checkpoint(p), CheckpointError);
  fs::remove(p);
  CHECK_THROWS_AS(load_checkpoint(tmp_path("ck_missing.flrb")), CheckpointError);
}

TEST_CASE("truncated checkpoint is rejected") {
  std::string p = tmp_path("ck_trunc.flrb");
  Rng rng(5);
  save_checkpoint(p, {{"w", Tensor::randn({8, 8}, rng, 1.f)}});
  std::string bytes = read_bytes(p);
  std::ofstream(p, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS_AS(load_checkpoint(p), CheckpointError);
  fs::remove(p);
}

TEST_CASE("param store rejects duplicate names") {
  ParamStore store;
  store.add("a", Tensor::zeros({2}));
  CHECK_THROWS_AS(store.add("a", Tensor::zeros({2})), ContractError);
  CHECK(store.find("a") != nullptr);
  CHECK(store.find("b") == nullptr);
  CHECK(store.param_count() == 2);
}
