#pragma once

#include <cstdint>

#include "diffiq/image.hpp"

namespace diffiq {

// Deterministic synthetic natural-looking scene: power-law textured noise on
// top of smooth illumination, soft blobs and a few sharp edges, with texture
// amplitude growing with local luminance. Values land in [5, 250].
ImagePlane synthetic_scene(int width, int height, std::uint64_t seed);

}  // namespace diffiq
