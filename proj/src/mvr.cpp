// SPDX-License-Identifier: Apache-2.0
#include "mbev/mvr.hpp"

#include <cmath>

namespace mbev {

ColumnSplit partition_columns(int wf, double ratio) {
  MBEV_CHECK(ratio > 0 && ratio < 1, Err::BadConfig, "ratio must be in (0, 1)");
  MBEV_CHECK(wf >= 3, Err::BadConfig,
             "grid too narrow to split into three parts");
  ColumnSplit s;
  s.left = std::max(1, int(std::lround((1.0 - ratio) / 2.0 * wf)));
  s.right = s.left;
  s.mid = wf - s.left - s.right;
  MBEV_CHECK(s.mid >= 1, Err::BadConfig,
             "grid too narrow to honor the requested side parts");
  return s;
}

}  // namespace mbev
