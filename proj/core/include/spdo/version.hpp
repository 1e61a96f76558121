#pragma once

#include <cstdint>

#ifndef SPDO_VERSION_STRING
#define SPDO_VERSION_STRING "0.0.0"
#endif

namespace spdo {

inline constexpr const char* kToolVersion = SPDO_VERSION_STRING;

// On-disk format versions. Bump when a layout changes.
inline constexpr std::uint32_t kMeshFormatVersion = 1;
inline constexpr std::uint32_t kStencilFormatVersion = 1;
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;
inline constexpr std::uint32_t kDatasetFormatVersion = 1;
inline constexpr std::uint32_t kReportFormatVersion = 1;

}  // namespace spdo
