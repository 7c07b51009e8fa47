#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>

#include "vti/image.hpp"
#include "vti/model.hpp"
#include "vti/steering_types.hpp"

namespace vti {

// Binary containers, all little-endian:
//
//   VTIP  images       magic "VTIP", u32 version, u32 H, u32 W, u32 C,
//                      H*W*C float32 payload
//   VTIM  checkpoints  magic "VTIM", u32 version, 14 u32 config fields
//                      (image_h image_w channels patch_size enc_layers
//                      enc_dim enc_heads enc_mlp_ratio dec_layers dec_dim
//                      dec_heads dec_mlp_ratio vocab_size max_seq), then
//                      every parameter tensor in layout order as
//                      u32 rank, u32 dims[rank], float32 payload
//   VTID  directions   magic "VTID", u32 version, vision block
//                      (u8 tag=0, u32 L, u32 T, u32 D, payload), text
//                      block (u8 tag=1, u32 L, u32 T=1, u32 D, payload),
//                      u32 meta length, UTF-8 JSON meta
//
// Round-trips are bit-exact; bad magic/version/truncation raise
// FormatError without producing a partial value.

constexpr std::uint32_t kVtipVersion = 1;
constexpr std::uint32_t kVtimVersion = 1;
constexpr std::uint32_t kVtidVersion = 1;

void write_vtip(const std::filesystem::path& path, const Image& image);
Image read_vtip(const std::filesystem::path& path);

void write_vtim(const std::filesystem::path& path, const ModelConfig& config,
                const ModelParams& params);
std::pair<ModelConfig, ModelParams> read_vtim(const std::filesystem::path& path);

void write_vtid(const std::filesystem::path& path, const SteeringSet& set);
SteeringSet read_vtid(const std::filesystem::path& path);

/// FNV-1a 64 over a file's bytes, as fixed-width hex.
std::string file_hash_hex(const std::filesystem::path& path);
std::string hash_hex(std::uint64_t value);

}  // namespace vti
