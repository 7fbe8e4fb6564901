#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace colony {

struct ImageDims {
    int width = 1;
    int height = 1;

    ImageDims() = default;
    ImageDims(int w, int h);

    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }

    friend bool operator==(const ImageDims&, const ImageDims&) = default;
};

/// Axis-aligned box in continuous pixel coordinates, origin top-left.
///
/// Intervals are half-open: pixel (i, j) is covered iff its center
/// (i + 0.5, j + 0.5) lies in [x_min, x_max) x [y_min, y_max).
class BoundingBox {
  public:
    /// Throws ErrorKind::InvalidGeometry unless all coordinates are finite,
    /// non-negative and the box has strictly positive area.
    BoundingBox(double x_min, double y_min, double x_max, double y_max);

    double x_min() const noexcept { return x_min_; }
    double y_min() const noexcept { return y_min_; }
    double x_max() const noexcept { return x_max_; }
    double y_max() const noexcept { return y_max_; }
    double width() const noexcept { return x_max_ - x_min_; }
    double height() const noexcept { return y_max_ - y_min_; }
    double area() const noexcept { return width() * height(); }

    bool fits(const ImageDims& dims) const noexcept {
        return x_max_ <= dims.width && y_max_ <= dims.height;
    }

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;

  private:
    double x_min_, y_min_, x_max_, y_max_;
};

/// Dense row-major 0/1 raster. Used at the edges (file decode, drawing,
/// tests); all metric arithmetic works on the run-length form.
struct BinaryRaster {
    ImageDims dims;
    std::vector<std::uint8_t> pixels;

    explicit BinaryRaster(ImageDims d) : dims(d), pixels(d.pixel_count(), 0) {}

    std::uint8_t& at(int x, int y) {
        return pixels[static_cast<std::size_t>(y) * dims.width + x];
    }
    std::uint8_t at(int x, int y) const {
        return pixels[static_cast<std::size_t>(y) * dims.width + x];
    }

    friend bool operator==(const BinaryRaster&, const BinaryRaster&) = default;
};

/// Binary instance mask stored as row-major run lengths.
///
/// Runs alternate background/foreground starting with background; the first
/// run may be zero, every later run is positive, and the runs sum to
/// width * height. This form is canonical, so equality of masks is equality
/// of rasters.
class InstanceMask {
  public:
    using Run = std::uint32_t;

    /// Throws ErrorKind::InvalidGeometry when the runs break the invariants.
    InstanceMask(ImageDims dims, std::vector<Run> runs);

    static InstanceMask empty(ImageDims dims);
    static InstanceMask full(ImageDims dims);
    static InstanceMask encode(const BinaryRaster& raster);

    /// Column-major counts as used by uncompressed COCO RLE.
    static InstanceMask from_column_major(ImageDims dims, std::span<const Run> counts);

    BinaryRaster decode() const;
    std::vector<Run> column_major_counts() const;

    const ImageDims& dims() const noexcept { return dims_; }
    const std::vector<Run>& runs() const noexcept { return runs_; }
    std::uint64_t foreground_count() const noexcept { return foreground_; }
    bool is_empty() const noexcept { return foreground_ == 0; }

    friend bool operator==(const InstanceMask& a, const InstanceMask& b) {
        return a.dims_ == b.dims_ && a.runs_ == b.runs_;
    }

  private:
    InstanceMask(ImageDims dims, std::vector<Run> runs, std::uint64_t foreground)
        : dims_(dims), runs_(std::move(runs)), foreground_(foreground) {}

    ImageDims dims_;
    std::vector<Run> runs_;
    std::uint64_t foreground_ = 0;
};

/// Analytic IoU on real coordinates; 0 for disjoint boxes.
double box_iou(const BoundingBox& a, const BoundingBox& b) noexcept;

/// 2|A n B| / (|A| + |B|). Two empty masks score 1.0.
double mask_dice(const InstanceMask& a, const InstanceMask& b);

std::uint64_t intersection_count(const InstanceMask& a, const InstanceMask& b);

/// Pixel-center rasterization. Boxes outside the frame give an empty mask.
InstanceMask box_to_mask(const BoundingBox& box, ImageDims dims);

InstanceMask mask_union(std::span<const InstanceMask> masks, ImageDims dims);
InstanceMask mask_union(const InstanceMask& a, const InstanceMask& b);
InstanceMask mask_intersect(const InstanceMask& a, const InstanceMask& region);

/// Tight box with integer edges; nullopt for an empty mask.
std::optional<BoundingBox> mask_bbox(const InstanceMask& mask);

} // namespace colony
