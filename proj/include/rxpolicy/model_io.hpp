#pragma once

#include "rxpolicy/pipeline.hpp"

#include <string>

namespace rxp {

inline constexpr const char* kModelFormatVersion = "rxpolicy-model v1";

// Versioned structured text, human-diffable: scalars as hexfloats (exact
// round trip), member arrays as base64-encoded doubles. Loading a bundle
// reproduces bit-identical predictions; a version mismatch refuses to load.
void save_model(const TrainedPipeline& pipeline, const std::string& path);
TrainedPipeline load_model(const std::string& path);

// Exposed for tests.
std::string base64_encode(const unsigned char* data, std::size_t len);
std::string base64_decode(const std::string& text);

} // namespace rxp
