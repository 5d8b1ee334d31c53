#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace oodseg {

/// H x W grid of finite per-pixel anomaly scores, row-major.
class ScoreMap {
public:
    ScoreMap(std::size_t height, std::size_t width, std::vector<double> scores);
    static ScoreMap filled(std::size_t height, std::size_t width, double value);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return scores_.size(); }
    std::span<const double> scores() const noexcept { return scores_; }
    double at(std::size_t y, std::size_t x) const { return scores_[y * width_ + x]; }
    double operator[](std::size_t i) const { return scores_[i]; }

    friend bool operator==(const ScoreMap&, const ScoreMap&) = default;

private:
    std::size_t height_;
    std::size_t width_;
    std::vector<double> scores_;
};

/// H x W grid of {0, 1} labels, row-major.
class BinaryMask {
public:
    BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> labels);
    static BinaryMask zeros(std::size_t height, std::size_t width);
    static BinaryMask ones(std::size_t height, std::size_t width);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return labels_.size(); }
    std::span<const std::uint8_t> labels() const noexcept { return labels_; }
    bool at(std::size_t y, std::size_t x) const { return labels_[y * width_ + x] != 0; }
    bool operator[](std::size_t i) const { return labels_[i] != 0; }

    std::size_t count() const noexcept;
    BinaryMask complement() const;

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    std::size_t height_;
    std::size_t width_;
    std::vector<std::uint8_t> labels_;
};

/// Axis-aligned detection with half-open pixel bounds [x0, x1) x [y0, y1).
struct Box {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;
    double confidence = 1.0;

    int width() const noexcept { return x1 - x0; }
    int height() const noexcept { return y1 - y0; }

    friend bool operator==(const Box&, const Box&) = default;
};

class BoxSet {
public:
    BoxSet() = default;
    /// Checks x0 < x1, y0 < y1, non-negative origin and confidence in [0, 1].
    explicit BoxSet(std::vector<Box> boxes);

    const std::vector<Box>& boxes() const noexcept { return boxes_; }
    std::size_t size() const noexcept { return boxes_.size(); }
    bool empty() const noexcept { return boxes_.empty(); }

    /// Throws ValidationError when any box leaves the height x width canvas.
    void validate_canvas(std::size_t height, std::size_t width) const;

    friend bool operator==(const BoxSet&, const BoxSet&) = default;

private:
    std::vector<Box> boxes_;
};

/// Union of box interiors. Out-of-canvas boxes are rejected, not clipped.
BinaryMask boxes_to_mask(const BoxSet& boxes, std::size_t height, std::size_t width);

/// A score map with its detections and ground truth.
struct LabeledScene {
    ScoreMap scores;
    BinaryMask gt;
    BoxSet boxes;
};

void require_same_size(const ScoreMap& map, const BinaryMask& mask, const char* context);
void require_same_size(const BinaryMask& a, const BinaryMask& b, const char* context);

}  // namespace oodseg
