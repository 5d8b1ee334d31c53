#include "oodseg/datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "oodseg/errors.hpp"

namespace oodseg {

namespace {

std::string dims(std::size_t h, std::size_t w) { return std::to_string(h) + "x" + std::to_string(w); }

std::string describe(const Box& b) {
    return "(" + std::to_string(b.x0) + "," + std::to_string(b.y0) + "," + std::to_string(b.x1) + "," +
           std::to_string(b.y1) + ")";
}

}  // namespace

ScoreMap::ScoreMap(std::size_t height, std::size_t width, std::vector<double> scores)
    : height_(height), width_(width), scores_(std::move(scores)) {
    if (height_ == 0 || width_ == 0) throw ValidationError("score map: dimensions must be positive");
    if (scores_.size() != height_ * width_) {
        throw ValidationError("score map: " + dims(height_, width_) + " needs " + std::to_string(height_ * width_) +
                              " scores, got " + std::to_string(scores_.size()));
    }
    for (std::size_t i = 0; i < scores_.size(); ++i) {
        if (!std::isfinite(scores_[i])) throw NumericError("score map: non-finite score at pixel " + std::to_string(i));
    }
}

ScoreMap ScoreMap::filled(std::size_t height, std::size_t width, double value) {
    return ScoreMap(height, width, std::vector<double>(height * width, value));
}

BinaryMask::BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> labels)
    : height_(height), width_(width), labels_(std::move(labels)) {
    if (height_ == 0 || width_ == 0) throw ValidationError("mask: dimensions must be positive");
    if (labels_.size() != height_ * width_) {
        throw ValidationError("mask: " + dims(height_, width_) + " needs " + std::to_string(height_ * width_) +
                              " labels, got " + std::to_string(labels_.size()));
    }
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i] > 1) {
            throw ValidationError("mask: label " + std::to_string(labels_[i]) + " at pixel " + std::to_string(i) +
                                  " is not binary");
        }
    }
}

BinaryMask BinaryMask::zeros(std::size_t height, std::size_t width) {
    return BinaryMask(height, width, std::vector<std::uint8_t>(height * width, 0));
}

BinaryMask BinaryMask::ones(std::size_t height, std::size_t width) {
    return BinaryMask(height, width, std::vector<std::uint8_t>(height * width, 1));
}

std::size_t BinaryMask::count() const noexcept {
    return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), std::uint8_t{1}));
}

BinaryMask BinaryMask::complement() const {
    std::vector<std::uint8_t> out(labels_.size());
    std::transform(labels_.begin(), labels_.end(), out.begin(), [](std::uint8_t v) { return std::uint8_t(1 - v); });
    return BinaryMask(height_, width_, std::move(out));
}

BoxSet::BoxSet(std::vector<Box> boxes) : boxes_(std::move(boxes)) {
    for (const Box& b : boxes_) {
        if (b.x0 < 0 || b.y0 < 0) throw ValidationError("box " + describe(b) + ": negative origin");
        if (b.x1 <= b.x0 || b.y1 <= b.y0) throw ValidationError("box " + describe(b) + ": empty extent");
        if (!(b.confidence >= 0.0 && b.confidence <= 1.0)) {
            throw ValidationError("box " + describe(b) + ": confidence outside [0,1]");
        }
    }
}

void BoxSet::validate_canvas(std::size_t height, std::size_t width) const {
    for (const Box& b : boxes_) {
        if (static_cast<std::size_t>(b.x1) > width || static_cast<std::size_t>(b.y1) > height) {
            throw ValidationError("box " + describe(b) + " leaves the " + dims(height, width) + " canvas");
        }
    }
}

BinaryMask boxes_to_mask(const BoxSet& boxes, std::size_t height, std::size_t width) {
    boxes.validate_canvas(height, width);
    std::vector<std::uint8_t> labels(height * width, 0);
    for (const Box& b : boxes.boxes()) {
        for (int y = b.y0; y < b.y1; ++y) {
            std::fill_n(labels.begin() + static_cast<std::ptrdiff_t>(y * width + b.x0), b.x1 - b.x0, 1);
        }
    }
    return BinaryMask(height, width, std::move(labels));
}

void require_same_size(const ScoreMap& map, const BinaryMask& mask, const char* context) {
    if (map.height() != mask.height() || map.width() != mask.width()) {
        throw ShapeError(std::string(context) + ": score map " + dims(map.height(), map.width()) + " vs mask " +
                         dims(mask.height(), mask.width()));
    }
}

void require_same_size(const BinaryMask& a, const BinaryMask& b, const char* context) {
    if (a.height() != b.height() || a.width() != b.width()) {
        throw ShapeError(std::string(context) + ": mask " + dims(a.height(), a.width()) + " vs mask " +
                         dims(b.height(), b.width()));
    }
}

}  // namespace oodseg
