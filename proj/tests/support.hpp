#pragma once

#include <filesystem>
#include <string>

#include "doctest.h"
#include "snap/task_model.hpp"

namespace snap::testing {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(SNAP_FIXTURE_DIR) / name;
}

inline task::SpecDocument load_fixture(const std::string& name) {
  auto r = task::load_spec_file(fixture(name));
  REQUIRE_MESSAGE(r.spec.has_value(), "fixture " << name << " does not load");
  return *r.spec;
}

}  // namespace snap::testing
