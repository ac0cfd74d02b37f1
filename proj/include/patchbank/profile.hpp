#pragma once

#include <string>
#include <string_view>

#include "patchbank/error.hpp"

namespace patchbank {

// Dataset layout/augmentation profile. VisA is consumed in its one-class
// reorganized form, which shares the MVTec directory layout.
enum class DatasetProfile { mvtec, visa };

inline DatasetProfile parse_profile(std::string_view name) {
  if (name == "mvtec" || name == "mvtec-style") return DatasetProfile::mvtec;
  if (name == "visa" || name == "visa-style") return DatasetProfile::visa;
  throw InvalidArgument("unknown dataset profile '" + std::string(name) + "' (expected mvtec or visa)");
}

inline std::string to_string(DatasetProfile p) { return p == DatasetProfile::mvtec ? "mvtec" : "visa"; }

}  // namespace patchbank
