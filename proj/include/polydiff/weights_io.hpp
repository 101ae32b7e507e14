#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "polydiff/denoiser_net.hpp"
#include "polydiff/optimizer.hpp"

namespace polydiff {

// Binary weights container: "DPCW" magic, u32 version, a length-prefixed JSON
// descriptor (architecture, tensor names and shapes), float32 little-endian
// blobs in descriptor order (parameters, then normalization running
// statistics, then optional optimizer moments), and a trailing CRC32 of all
// preceding bytes.  Loading verifies magic, version, sizes, and checksum, and
// rejects any mismatch.
inline constexpr std::uint32_t kWeightsVersion = 1;

void save_weights(const std::filesystem::path& path, CondUnet<float>& net,
                  const Adam<float>* opt = nullptr);

// Reads just the architecture descriptor (still checksum-verified).
NetConfig peek_weights_config(const std::filesystem::path& path);

// Restores parameters and running statistics into a net of matching
// architecture; optionally restores optimizer moments.
void load_weights(const std::filesystem::path& path, CondUnet<float>& net,
                  Adam<float>* opt = nullptr);

std::uint32_t crc32_bytes(const unsigned char* data, std::size_t n);

}  // namespace polydiff
