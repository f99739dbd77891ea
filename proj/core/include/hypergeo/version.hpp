#pragma once

namespace hypergeo {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace hypergeo
