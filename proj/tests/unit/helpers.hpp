#pragma once

#include <cmath>
#include <random>

#include "afford/error.hpp"
#include "afford/geometry.hpp"
#include "doctest.h"

// Passes iff `expr` throws afford::Error carrying `code`.
#define CHECK_ERROR_CODE(expr, code_)                         \
  do {                                                        \
    bool afford_caught_ = false;                              \
    try {                                                     \
      (void)(expr);                                           \
    } catch (const afford::Error& afford_e_) {                \
      afford_caught_ = true;                                  \
      CHECK_MESSAGE(afford_e_.code() == (code_), afford_e_.what()); \
    }                                                         \
    CHECK_MESSAGE(afford_caught_, "no afford::Error thrown"); \
  } while (0)

namespace testutil {

inline afford::Quaternion random_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return afford::Quaternion::from_eigen(q);
}

inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng) { return random_quat(rng).to_eigen().toRotationMatrix(); }

}  // namespace testutil
