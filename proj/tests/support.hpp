//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef TRISEC_TESTS_SUPPORT_HPP
#define TRISEC_TESTS_SUPPORT_HPP

#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>

#include "trisec/image_io.hpp"
#include "trisec/model_io.hpp"
#include "trisec/network.hpp"
#include "trisec/tensor.hpp"

namespace testing_support {

inline std::filesystem::path fixture_dir() { return TRISEC_FIXTURE_DIR; }

inline std::filesystem::path model_path(const std::string &stem) {
  return fixture_dir() / (stem + ".json");
}

inline trisec::NetworkSpec load_fixture(const std::string &stem) {
  return trisec::load_model(model_path(stem));
}

inline std::filesystem::path probe_path(std::size_t i) {
  char name[32];
  std::snprintf(name, sizeof(name), "probe_%02zu.pgm", i);
  return fixture_dir() / "images" / name;
}

inline trisec::Tensor probe(std::size_t i) {
  return trisec::load_image(probe_path(i));
}

/// Target paired with probe i: a different class for every offset 1..9.
inline std::size_t paired_target(std::size_t i, std::size_t original,
                                 std::size_t classes = 10) {
  return (original + 1 + i % (classes - 1)) % classes;
}

/// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string &name) {
  auto dir = std::filesystem::temp_directory_path() / ("trisec_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline trisec::Tensor random_image(std::mt19937 &gen, std::size_t h = 28,
                                   std::size_t w = 28) {
  return trisec::random_uniform({1, h, w}, 0.0f, 1.0f, gen);
}

} // namespace testing_support

#endif // TRISEC_TESTS_SUPPORT_HPP
