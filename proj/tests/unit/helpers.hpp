#pragma once

#include "brainalign/common.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <string>

#ifndef BRAINALIGN_TEST_TMP
#define BRAINALIGN_TEST_TMP "test_tmp"
#endif

namespace testutil {

using brainalign::Matrix;
using brainalign::Vector;

inline Matrix randn(Eigen::Index rows, Eigen::Index cols, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = nd(rng);
  return m;
}

/// Fresh, empty scratch directory named after the running test.
inline std::filesystem::path scratch_dir() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto dir = std::filesystem::path(BRAINALIGN_TEST_TMP) / (std::string(info->test_suite_name()) + "." + info->name());
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string data_dir() { return BRAINALIGN_DATA_DIR; }

}  // namespace testutil
