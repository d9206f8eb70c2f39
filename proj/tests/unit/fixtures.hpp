#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include "deepgin/image.hpp"
#include "deepgin/rng.hpp"

namespace testutil {

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  TempDir() {
    static int counter = 0;
    const auto base = std::filesystem::temp_directory_path();
    deepgin::CounterRng rng(deepgin::derive_key({static_cast<std::uint64_t>(::getpid()),
                                                 static_cast<std::uint64_t>(++counter)}));
    path = base / ("deepgin-test-" + std::to_string(rng.next_u64() % 1000000007ULL));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline deepgin::ImageTensor random_image(int h, int w, int c = 3, std::uint64_t seed = 1) {
  deepgin::ImageTensor img(h, w, c);
  deepgin::CounterRng rng(seed);
  for (double& v : img.data()) v = rng.uniform();
  return img;
}

inline deepgin::MaskTensor random_mask(int h, int w, std::uint64_t seed = 1) {
  deepgin::MaskTensor m(h, w);
  deepgin::CounterRng rng(seed);
  for (auto& v : m.data()) v = rng.uniform() < 0.5 ? 1 : 0;
  return m;
}

}  // namespace testutil
