#pragma once

// On-disk formats.
//
// Model directory: `manifest.json` plus one raw little-endian blob per
// tensor. Blobs hold float32 values ("f32") or, for quantized layers, 32-bit
// code words ("code32": two's complement for fixed-point formats, the raw bit
// pattern for minifloats) together with the layer's format descriptor and
// scale. Every
// blob reference carries its shape and an FNV-1a 64-bit checksum.
//
// Dataset file: "QDS1", then little-endian uint32 sample count, rank, each
// dimension, class count; then all sample values as float32; then one uint32
// label per sample.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mixedquant/dataset.hpp"
#include "mixedquant/model.hpp"

namespace mixedquant {

inline constexpr int kManifestVersion = 1;
inline constexpr const char* kManifestFormat = "mixedquant-model";
inline constexpr const char* kManifestFile = "manifest.json";

/// Writes `dir/manifest.json` and blobs, creating `dir` if needed. Values are
/// narrowed to float32; models whose values are float32-representable round
/// trip bit-exactly. Layers with `quantized` set store codes instead.
void save_model(const Model& model, const std::filesystem::path& dir);

/// Throws IoError; kind() distinguishes bad magic, bad version, malformed
/// manifest, missing blob, blob size mismatch, checksum mismatch, unknown
/// layer kind and shape mismatch.
Model load_model(const std::filesystem::path& dir);

std::vector<std::byte> encode_dataset(const LabeledSet& set);
LabeledSet decode_dataset(std::span<const std::byte> bytes);
void save_dataset(const LabeledSet& set, const std::filesystem::path& path);
LabeledSet load_dataset(const std::filesystem::path& path);

/// Model with every conv/fc layer replaced by its quantized form (codes,
/// format and scale), ready for save_model.
Model quantize_model(const Model& model, const WeightFormat& fmt, const RoundingMode& mode = {});

std::uint64_t fnv1a64(std::span<const std::byte> bytes) noexcept;
std::vector<std::byte> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes);

/// Lines of "<16 hex digits>  <relative path>" for every regular file under
/// `root` (sorted, excluding `exclude`).
std::string checksum_listing(const std::filesystem::path& root, const std::string& exclude = {});

}  // namespace mixedquant
