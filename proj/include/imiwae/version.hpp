#pragma once

namespace imiwae {

constexpr const char* kVersion = "0.1.0";

}  // namespace imiwae
