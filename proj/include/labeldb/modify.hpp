#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "labeldb/formats.hpp"
#include "labeldb/media.hpp"
#include "labeldb/store.hpp"

namespace labeldb::modify {

namespace fs = std::filesystem;

/// Moves each side out by `expand_perc` of the box extent. No clamping to the image.
int64_t expand_boxes(Session& session, double expand_perc);

/// Intersects every box with its image frame. Returns the number of boxes changed.
int64_t clamp_boxes_to_image(Session& session);

/// Sets each polygon-bearing object's box to the extent of all its points.
int64_t polygons_to_boxes(Session& session);

/// Merges another database into this one with freshly allocated ids.
formats::ImportReport add_database(Session& session, const fs::path& other_db);

/// Partitions `items` (already in canonical order) after a seeded shuffle.
/// Split i receives floor(fractions[i] * N) items; rounding leftovers go to the first split.
std::vector<std::vector<std::string>> split_items(std::vector<std::string> items, const std::vector<double>& fractions,
                                                  uint64_t seed);

/// Writes one database per fraction; returns the number of images in each.
std::vector<int64_t> split_database(Session& session, const std::vector<double>& fractions,
                                    const std::vector<fs::path>& out_names, uint64_t seed);

struct CropOptions {
    int target_width = 0;
    int target_height = 0;
    media::EdgePolicy edges = media::EdgePolicy::distort;
    fs::path image_pictures_dir;
    int jpeg_quality = 90;
};

struct CropReport {
    int64_t written = 0;
    std::vector<formats::SkippedFile> skipped;
};

/// Replaces the database contents with one image per object crop.
CropReport crop_objects(Session& session, const CropOptions& options);

}  // namespace labeldb::modify
