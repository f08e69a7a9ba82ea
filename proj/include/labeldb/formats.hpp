#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "labeldb/store.hpp"

namespace labeldb::formats {

namespace fs = std::filesystem;

struct SkippedFile {
    fs::path path;
    std::string reason;
};

struct ImportReport {
    int64_t files_scanned = 0;
    int64_t images_added = 0;
    int64_t objects_added = 0;
    std::vector<SkippedFile> skipped;
};

/// Property keys written for each KITTI label, in label-line order after the bounding box.
inline constexpr std::array<const char*, 10> kKittiPropertyKeys = {
    "truncated", "occluded", "alpha", "dim_height", "dim_width", "dim_length", "loc_x", "loc_y", "loc_z", "rotation_y"};

/// Values written when an object lacks the corresponding property.
inline constexpr std::array<const char*, 10> kKittiPropertyDefaults = {"0",  "0",  "-10", "-1", "-1",
                                                                       "-1", "-1", "-1",  "-1", "-10"};

/// One line of a KITTI object label file. Property values keep their source text.
struct KittiLabel {
    std::string type;
    double left = 0;
    double top = 0;
    double right = 0;
    double bottom = 0;
    std::array<std::string, 10> properties;
    std::optional<double> score;
};

/// Parses a label stream; throws Error on a line with the wrong field count or a non-numeric field.
std::vector<KittiLabel> parse_kitti_labels(std::istream& in);
std::vector<KittiLabel> parse_kitti_label_file(const fs::path& path);
std::string format_kitti_label(const KittiLabel& label);

/// Image files (png/jpg/jpeg) directly inside `dir`, sorted by name.
std::vector<fs::path> list_image_files(const fs::path& dir);

ImportReport import_kitti(Session& session, const fs::path& images_dir, const std::optional<fs::path>& detection_dir);
ImportReport import_pascal_voc(Session& session, const fs::path& images_dir, const fs::path& annotations_dir);
ImportReport import_labelme(Session& session, const fs::path& images_dir, const fs::path& annotations_dir);

/// Writes one label file per image; returns the number of files written.
int64_t export_kitti(Session& session, const fs::path& detection_dir);

/// Writes one RFC 4180 row per object after a header row; returns the number of object rows.
int64_t export_csv(Session& session, const fs::path& out_path);

/// Quotes a CSV field when it contains a comma, quote, or line break.
std::string csv_field(std::string_view value);

}  // namespace labeldb::formats
