#pragma once

namespace pheno {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace pheno
