#pragma once

#include <filesystem>
#include <string_view>
#include <vector>

#include "oodseg/datamodel.hpp"
#include "oodseg/diffmath/tensor.hpp"

namespace oodseg::io {

// Score map: "OODSM1\n", u32 height, u32 width, then height*width float32,
// all little-endian, row-major. Scores are widened to double on read and
// narrowed on write.
inline constexpr std::string_view kScoreMapMagic = "OODSM1\n";
// Mask: "OODMK1\n", u32 height, u32 width, then one byte (0 or 1) per pixel.
inline constexpr std::string_view kMaskMagic = "OODMK1\n";
// Parameter files: magic, u64 parameter count, then float64 values.
inline constexpr std::string_view kThresholdParamsMagic = "OODTP1\n";
inline constexpr std::string_view kFusionParamsMagic = "OODFP1\n";

ScoreMap read_scoremap(const std::filesystem::path& path);
void write_scoremap(const ScoreMap& map, const std::filesystem::path& path);

BinaryMask read_mask(const std::filesystem::path& path);
void write_mask(const BinaryMask& mask, const std::filesystem::path& path);

/// One record per line: `x0,y0,x1,y1,confidence`. Blank lines are skipped.
BoxSet read_boxes(const std::filesystem::path& path);
void write_boxes(const BoxSet& boxes, const std::filesystem::path& path);

/// Writes the tensors back to back. Shapes are not stored; the reader
/// supplies them from the model architecture.
void write_parameters(std::string_view magic, const std::vector<diffmath::Tensor>& params,
                      const std::filesystem::path& path);
/// Reads a parameter file into tensors shaped like `layout`. The stored
/// count must equal the layout's total size.
std::vector<diffmath::Tensor> read_parameters(std::string_view magic, const std::vector<diffmath::Tensor>& layout,
                                              const std::filesystem::path& path);

}  // namespace oodseg::io
