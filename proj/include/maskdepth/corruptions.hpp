#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maskdepth/image.hpp"
#include "maskdepth/masking.hpp"

namespace maskdepth {

enum class CorruptionKind {
    gaussian_noise,
    shot_noise,
    impulse_noise,
    defocus_blur,
    motion_blur,
    zoom_blur,
    fog,
    brightness,
    contrast,
    pixelate,
};

const std::vector<CorruptionKind>& all_corruption_kinds();
std::string to_string(CorruptionKind kind);
CorruptionKind corruption_from_string(const std::string& name);

struct CorruptionSpec {
    CorruptionKind kind = CorruptionKind::gaussian_noise;
    int severity = 1;  // 1..5
    uint64_t seed = 0;
};

/// Severity parameter for a kind (noise sigma, kernel radius, blend factor,
/// ...). Exposed so the tables are testable.
double severity_parameter(CorruptionKind kind, int severity);

/// Deterministic given the seed; output clipped to [0,1].
Image corrupt(const Image& img, const CorruptionSpec& spec);

struct OcclusionResult {
    Image image;
    MaskGrid grid;
};

/// Replaces masked patches by the per-channel mean of the whole image. Uses
/// the mask generators, so equal configs mask the same patch set as token
/// masking.
OcclusionResult occlude(const Image& img, MaskStrategy strategy, const MaskConfig& cfg);

}  // namespace maskdepth
