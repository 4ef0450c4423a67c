// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "splatseg/image.hpp"
#include "splatseg/trainer.hpp"
#include "splatseg/types.hpp"

namespace splatseg {

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

// PNG ------------------------------------------------------------------------

/// 8-bit RGB; values are quantized to k/255.
void write_png_rgb8(const std::filesystem::path &path, const ImageF &image);
ImageF read_png_rgb8(const std::filesystem::path &path);
/// In-memory 8-bit PNG of a 1- or 3-channel image in [0, 1].
std::string png_bytes(const ImageF &image);
/// 16-bit single channel. Labels must lie in [0, 65535].
void write_png_label16(const std::filesystem::path &path, const LabelImage &labels);
LabelImage read_png_label16(const std::filesystem::path &path);
/// 8-bit single channel, 0 or 255 on disk.
void write_png_mask8(const std::filesystem::path &path, const MaskImage &mask);
MaskImage read_png_mask8(const std::filesystem::path &path);

// PLY ------------------------------------------------------------------------

struct PlyImport {
  GaussianCloud cloud;
  bool features_missing = false; // no feat_* properties: features are zero
};

/// Little-endian binary PLY in the usual 3DGS layout plus feat_* channels, written as doubles.
void export_ply(const GaussianCloud &cloud, const std::filesystem::path &path);
std::string export_ply_bytes(const GaussianCloud &cloud);
/// Property order is free; float, double and integer property types are accepted.
PlyImport import_ply(const std::filesystem::path &path, int feature_dim_if_missing = 0);
PlyImport import_ply_bytes(const std::string &bytes, int feature_dim_if_missing = 0);

void write_seed_points(const std::filesystem::path &path, const SeedPoints &points);
SeedPoints read_seed_points(const std::filesystem::path &path);

// Datasets -------------------------------------------------------------------

struct LoadOptions {
  bool load_truth = true;
};

/// Writes manifest.json, images/, masks/, gt/ (when frames carry truth) and points.ply.
void save_dataset(const Dataset &dataset, const std::filesystem::path &dir);
Dataset load_dataset(const std::filesystem::path &dir, const LoadOptions &options = {});

// Checkpoints ----------------------------------------------------------------

std::string checkpoint_bytes(const TrainState &state);
TrainState checkpoint_from_bytes(const std::string &bytes);
void save_checkpoint(const TrainState &state, const std::filesystem::path &path);
TrainState load_checkpoint(const std::filesystem::path &path);

/// FNV-1a 64 of a byte string, as 16 hex digits.
std::string fnv1a_hex(const std::string &bytes);

std::string read_file(const std::filesystem::path &path);
/// Writes through a temporary file and renames it into place.
void write_file(const std::filesystem::path &path, const std::string &bytes);

} // namespace splatseg
