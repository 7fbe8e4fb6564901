#include "colony/geometry.hpp"

#include "colony/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace colony {

namespace {

[[noreturn]] void geometry_error(const std::string& what) {
    throw Error(ErrorKind::InvalidGeometry, what);
}

void require_same_dims(const InstanceMask& a, const InstanceMask& b) {
    if (a.dims() != b.dims()) {
        std::ostringstream os;
        os << "mask dimension mismatch: " << a.dims().width << "x" << a.dims().height << " vs "
           << b.dims().width << "x" << b.dims().height;
        geometry_error(os.str());
    }
}

// Walks a run list one homogeneous span at a time.
class RunCursor {
  public:
    explicit RunCursor(const std::vector<InstanceMask::Run>& runs) : runs_(runs) {
        left_ = runs_.empty() ? 0 : runs_[0];
        skip_empty();
    }

    bool done() const noexcept { return index_ >= runs_.size(); }
    bool value() const noexcept { return index_ % 2 == 1; }
    std::uint64_t left() const noexcept { return left_; }

    void advance(std::uint64_t n) {
        left_ -= n;
        skip_empty();
    }

  private:
    void skip_empty() {
        while (left_ == 0 && index_ < runs_.size()) {
            ++index_;
            left_ = index_ < runs_.size() ? runs_[index_] : 0;
        }
    }

    const std::vector<InstanceMask::Run>& runs_;
    std::size_t index_ = 0;
    std::uint64_t left_ = 0;
};

// Appends spans and produces canonical runs.
class RunBuilder {
  public:
    void push(bool value, std::uint64_t n) {
        if (n == 0) return;
        if (value != current_) {
            runs_.push_back(0);
            current_ = value;
        }
        runs_.back() += static_cast<InstanceMask::Run>(n);
        if (value) foreground_ += n;
    }

    std::vector<InstanceMask::Run> take() { return std::move(runs_); }
    std::uint64_t foreground() const noexcept { return foreground_; }

  private:
    std::vector<InstanceMask::Run> runs_{0};
    bool current_ = false;
    std::uint64_t foreground_ = 0;
};

template <class Op>
std::vector<InstanceMask::Run> combine(const InstanceMask& a, const InstanceMask& b, Op op) {
    RunCursor ca(a.runs()), cb(b.runs());
    RunBuilder out;
    while (!ca.done() && !cb.done()) {
        const auto n = std::min(ca.left(), cb.left());
        out.push(op(ca.value(), cb.value()), n);
        ca.advance(n);
        cb.advance(n);
    }
    return out.take();
}

} // namespace

ImageDims::ImageDims(int w, int h) : width(w), height(h) {
    if (w < 1 || h < 1) {
        std::ostringstream os;
        os << "image dimensions must be positive, got " << w << "x" << h;
        geometry_error(os.str());
    }
}

BoundingBox::BoundingBox(double x_min, double y_min, double x_max, double y_max)
    : x_min_(x_min), y_min_(y_min), x_max_(x_max), y_max_(y_max) {
    const bool finite = std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
                        std::isfinite(y_max);
    if (!finite || x_min < 0 || y_min < 0 || !(x_min < x_max) || !(y_min < y_max)) {
        std::ostringstream os;
        os << "invalid box (" << x_min << ", " << y_min << ", " << x_max << ", " << y_max << ")";
        geometry_error(os.str());
    }
}

InstanceMask::InstanceMask(ImageDims dims, std::vector<Run> runs) : dims_(dims), runs_(std::move(runs)) {
    if (runs_.empty()) geometry_error("mask has no runs");
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < runs_.size(); ++i) {
        if (i > 0 && runs_[i] == 0) geometry_error("mask run after the first is zero");
        total += runs_[i];
        if (i % 2 == 1) foreground_ += runs_[i];
    }
    if (total != dims_.pixel_count()) {
        std::ostringstream os;
        os << "mask runs sum to " << total << ", expected " << dims_.pixel_count();
        geometry_error(os.str());
    }
}

InstanceMask InstanceMask::empty(ImageDims dims) {
    return {dims, {static_cast<Run>(dims.pixel_count())}, 0};
}

InstanceMask InstanceMask::full(ImageDims dims) {
    return {dims, {0, static_cast<Run>(dims.pixel_count())}, dims.pixel_count()};
}

InstanceMask InstanceMask::encode(const BinaryRaster& raster) {
    if (raster.pixels.size() != raster.dims.pixel_count()) geometry_error("raster size does not match its dims");
    RunBuilder b;
    std::size_t i = 0;
    const std::size_t n = raster.pixels.size();
    while (i < n) {
        const bool v = raster.pixels[i] != 0;
        std::size_t j = i;
        while (j < n && (raster.pixels[j] != 0) == v) ++j;
        b.push(v, j - i);
        i = j;
    }
    const auto fg = b.foreground();
    return {raster.dims, b.take(), fg};
}

BinaryRaster InstanceMask::decode() const {
    BinaryRaster r(dims_);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < runs_.size(); ++i) {
        if (i % 2 == 1) std::fill_n(r.pixels.begin() + static_cast<std::ptrdiff_t>(pos), runs_[i], 1);
        pos += runs_[i];
    }
    return r;
}

InstanceMask InstanceMask::from_column_major(ImageDims dims, std::span<const Run> counts) {
    // Validate the counts by building a transposed mask (height x width rows).
    const InstanceMask transposed(ImageDims(dims.height, dims.width),
                                  std::vector<Run>(counts.begin(), counts.end()));
    const BinaryRaster t = transposed.decode();
    BinaryRaster r(dims);
    for (int x = 0; x < dims.width; ++x)
        for (int y = 0; y < dims.height; ++y) r.at(x, y) = t.at(y, x);
    return encode(r);
}

std::vector<InstanceMask::Run> InstanceMask::column_major_counts() const {
    const BinaryRaster r = decode();
    BinaryRaster t(ImageDims(dims_.height, dims_.width));
    for (int x = 0; x < dims_.width; ++x)
        for (int y = 0; y < dims_.height; ++y) t.at(y, x) = r.at(x, y);
    return encode(t).runs();
}

double box_iou(const BoundingBox& a, const BoundingBox& b) noexcept {
    const double iw = std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min());
    const double ih = std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min());
    if (iw <= 0 || ih <= 0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return std::clamp(inter / uni, 0.0, 1.0);
}

std::uint64_t intersection_count(const InstanceMask& a, const InstanceMask& b) {
    require_same_dims(a, b);
    RunCursor ca(a.runs()), cb(b.runs());
    std::uint64_t count = 0;
    while (!ca.done() && !cb.done()) {
        const auto n = std::min(ca.left(), cb.left());
        if (ca.value() && cb.value()) count += n;
        ca.advance(n);
        cb.advance(n);
    }
    return count;
}

double mask_dice(const InstanceMask& a, const InstanceMask& b) {
    const auto inter = intersection_count(a, b);
    const auto total = a.foreground_count() + b.foreground_count();
    if (total == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

InstanceMask box_to_mask(const BoundingBox& box, ImageDims dims) {
    // Pixel i is covered iff lo <= i + 0.5 < hi, i.e. ceil(lo - 0.5) <= i < ceil(hi - 0.5).
    auto span = [](double lo, double hi, int limit) {
        const double first = std::clamp(std::ceil(lo - 0.5), 0.0, static_cast<double>(limit));
        const double last = std::clamp(std::ceil(hi - 0.5), 0.0, static_cast<double>(limit));
        return std::pair{static_cast<int>(first), static_cast<int>(last)};
    };
    const auto [x0, x1] = span(box.x_min(), box.x_max(), dims.width);
    const auto [y0, y1] = span(box.y_min(), box.y_max(), dims.height);
    if (x0 >= x1 || y0 >= y1) return InstanceMask::empty(dims);

    RunBuilder b;
    b.push(false, static_cast<std::uint64_t>(y0) * dims.width);
    for (int y = y0; y < y1; ++y) {
        b.push(false, static_cast<std::uint64_t>(x0));
        b.push(true, static_cast<std::uint64_t>(x1 - x0));
        b.push(false, static_cast<std::uint64_t>(dims.width - x1));
    }
    b.push(false, static_cast<std::uint64_t>(dims.height - y1) * dims.width);
    return InstanceMask(dims, b.take());
}

InstanceMask mask_union(const InstanceMask& a, const InstanceMask& b) {
    require_same_dims(a, b);
    return InstanceMask(a.dims(), combine(a, b, [](bool x, bool y) { return x || y; }));
}

InstanceMask mask_union(std::span<const InstanceMask> masks, ImageDims dims) {
    InstanceMask acc = InstanceMask::empty(dims);
    for (const auto& m : masks) acc = mask_union(acc, m);
    return acc;
}

InstanceMask mask_intersect(const InstanceMask& a, const InstanceMask& region) {
    require_same_dims(a, region);
    return InstanceMask(a.dims(), combine(a, region, [](bool x, bool y) { return x && y; }));
}

std::optional<BoundingBox> mask_bbox(const InstanceMask& mask) {
    if (mask.is_empty()) return std::nullopt;
    const std::uint64_t w = static_cast<std::uint64_t>(mask.dims().width);
    std::uint64_t x_lo = w, x_hi = 0, y_lo = UINT64_MAX, y_hi = 0;
    std::uint64_t pos = 0;
    const auto& runs = mask.runs();
    for (std::size_t i = 0; i < runs.size(); ++i) {
        if (i % 2 == 1) {
            const std::uint64_t first = pos, last = pos + runs[i] - 1;
            const std::uint64_t r0 = first / w, r1 = last / w;
            y_lo = std::min(y_lo, r0);
            y_hi = std::max(y_hi, r1);
            x_lo = std::min(x_lo, r1 > r0 ? 0 : first % w);
            x_hi = std::max(x_hi, r1 > r0 ? w - 1 : last % w);
        }
        pos += runs[i];
    }
    return BoundingBox(static_cast<double>(x_lo), static_cast<double>(y_lo), static_cast<double>(x_hi + 1),
                       static_cast<double>(y_hi + 1));
}

} // namespace colony
