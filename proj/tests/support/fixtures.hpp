#pragma once

#include "colony/geometry.hpp"
#include "colony/ingest.hpp"
#include "oracles.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace fixtures {

namespace fs = std::filesystem;

class TempDir {
  public:
    TempDir() {
        std::string tmpl = (fs::temp_directory_path() / "colony-test-XXXXXX").string();
        if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& p) const { return path_ / p; }

  private:
    fs::path path_;
};

inline colony::BinaryRaster to_binary(const oracle::Raster& r) {
    colony::BinaryRaster b(colony::ImageDims(static_cast<int>(r[0].size()), static_cast<int>(r.size())));
    for (std::size_t y = 0; y < r.size(); ++y)
        for (std::size_t x = 0; x < r[y].size(); ++x) b.at(static_cast<int>(x), static_cast<int>(y)) = r[y][x] ? 1 : 0;
    return b;
}

inline colony::InstanceMask to_mask(const oracle::Raster& r) { return colony::InstanceMask::encode(to_binary(r)); }

inline oracle::Raster to_oracle(const colony::InstanceMask& m) {
    const auto b = m.decode();
    oracle::Raster r = oracle::blank(b.dims.width, b.dims.height);
    for (int y = 0; y < b.dims.height; ++y)
        for (int x = 0; x < b.dims.width; ++x) r[y][x] = b.at(x, y);
    return r;
}

inline colony::BoundingBox to_box(const oracle::Box& b) { return colony::BoundingBox(b.x1, b.y1, b.x2, b.y2); }

/// Ellipse inscribed in the box, pixel-center rule.
inline oracle::Raster disk(const oracle::Box& b, int w, int h) {
    oracle::Raster r = oracle::blank(w, h);
    const double mx = (b.x1 + b.x2) / 2, my = (b.y1 + b.y2) / 2, rx = (b.x2 - b.x1) / 2, ry = (b.y2 - b.y1) / 2;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double dx = (x + 0.5 - mx) / rx, dy = (y + 0.5 - my) / ry;
            if (dx * dx + dy * dy <= 1.0) r[y][x] = 1;
        }
    return r;
}

struct Colony {
    oracle::Box box;
    int class_id;
};

struct Plate {
    std::string id;
    int width, height;
    std::vector<Colony> colonies;
};

/// Three small plates, two species, one species per plate.
inline std::vector<Plate> three_plates() {
    return {
        {"plate_a", 64, 48, {{{4, 4, 16, 16}, 1}, {{30, 20, 44, 34}, 1}}},
        {"plate_b", 64, 48, {{{2, 30, 12, 40}, 2}, {{20, 6, 32, 18}, 2}, {{46, 28, 60, 42}, 2}}},
        {"plate_c", 64, 48, {{{8, 24, 22, 38}, 1}, {{40, 4, 52, 16}, 1}}},
    };
}

inline oracle::Raster plate_mask(const Plate& p) {
    oracle::Raster r = oracle::blank(p.width, p.height);
    for (const auto& c : p.colonies) r = oracle::raster_or(r, disk(c.box, p.width, p.height));
    return r;
}

/// Light agar with dark colonies. Each plate gets a distinct tint so the
/// encoded bytes differ even for identical layouts.
inline cv::Mat plate_image(const Plate& p, int tint) {
    cv::Mat img(p.height, p.width, CV_8UC3, cv::Scalar(200, 210 - tint, 190 + tint));
    const auto mask = plate_mask(p);
    for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x)
            if (mask[y][x]) img.at<cv::Vec3b>(y, x) = cv::Vec3b(60, 70, 80);
    return img;
}

inline std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes images/, masks/ and manifest.json (boxes and masks) under dir.
inline colony::DatasetManifest write_dataset(const fs::path& dir, const std::vector<Plate>& plates,
                                             bool with_boxes = true, bool with_masks = true) {
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    colony::DatasetManifest m;
    m.name = "synthetic";
    m.categories = {{1, "species-1"}, {2, "species-2"}};
    if (with_boxes) m.boxes.emplace();
    if (with_masks) m.masks.emplace();
    int tint = 0;
    for (const auto& p : plates) {
        const fs::path img = dir / "images" / (p.id + ".png");
        cv::imwrite(img.string(), plate_image(p, tint));
        tint += 7;
        m.images.push_back({p.id, img.string(), colony::ImageDims(p.width, p.height), std::nullopt});
        if (with_boxes) {
            auto& list = (*m.boxes)[p.id];
            for (const auto& c : p.colonies) list.push_back({to_box(c.box), c.class_id});
        }
        if (with_masks) {
            const fs::path mp = dir / "masks" / (p.id + ".png");
            const auto mask = to_mask(plate_mask(p));
            colony::write_mask_png(mask, mp);
            m.masks->emplace(p.id, colony::GroundTruthMask{mp.string(), mask});
        }
    }
    colony::save_manifest(m, dir / "manifest.json");
    return colony::load_manifest(dir / "manifest.json");
}

/// Prediction set whose detections equal the ground truth (score 0.9) and
/// whose masks are the ground-truth disks.
inline colony::PredictionSet identity_predictions(const std::vector<Plate>& plates) {
    colony::PredictionSet set;
    set.source = "file:identity";
    set.model_version = "identity";
    for (const auto& p : plates) {
        colony::ImagePredictions ip;
        ip.masks.emplace();
        for (const auto& c : p.colonies) {
            ip.detections.push_back({to_box(c.box), 0.9, std::string("bacterial colony")});
            ip.masks->push_back(to_mask(disk(c.box, p.width, p.height)));
        }
        set.images.emplace(p.id, std::move(ip));
    }
    return set;
}

} // namespace fixtures
