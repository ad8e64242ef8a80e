#pragma once

#include <string>

#include "camrf/forest.hpp"

#ifndef CAMRF_SOURCE_DIR
#error "CAMRF_SOURCE_DIR must point at the repository root"
#endif

namespace fixture {

inline std::string source_path(const std::string& rel) { return std::string(CAMRF_SOURCE_DIR) + "/" + rel; }

inline const camrf::Dataset& iris() {
  static const camrf::Dataset d = camrf::load_dataset_csv(source_path("data/iris.csv"));
  return d;
}

}  // namespace fixture
