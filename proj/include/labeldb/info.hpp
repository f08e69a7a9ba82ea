#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "labeldb/store.hpp"

namespace labeldb::info {

namespace fs = std::filesystem;

struct Summary {
    int64_t num_images = 0;
    int64_t num_objects = 0;
    int64_t num_masks = 0;
    int64_t matches = 0;  // distinct match groups
    std::vector<int64_t> image_widths;  // distinct values, ascending
    std::vector<int64_t> image_heights;
    std::vector<std::string> properties;  // distinct keys, ascending
    std::optional<std::map<std::string, int64_t>> images_by_dir;
    std::optional<std::map<std::string, int64_t>> objects_by_image;
};

Summary summarize(Session& session, bool images_by_dir = false, bool objects_by_image = false);

/// "key: value" lines in alphabetical key order.
std::string to_text(const Summary& summary);
nlohmann::json to_json(const Summary& summary);

/// "640" for a single distinct value, "N different values" otherwise.
std::string describe_distinct(const std::vector<int64_t>& values);

struct Bin {
    double low = 0;
    double high = 0;
    int64_t count = 0;
};

struct Histogram {
    std::vector<Bin> bins;
    int64_t values = 0;       // parseable values binned
    int64_t unparseable = 0;  // NULL or non-numeric
};

/// Sturges' rule: ceil(log2 n) + 1.
int sturges_bins(int64_t n);

/// Equal-width bins over [min, max]; the last bin is closed on the right.
Histogram make_histogram(const std::vector<double>& values, std::optional<int> bins, int64_t unparseable = 0);

/// Runs a single-column query and bins its values.
Histogram histogram_from_query(Session& session, std::string_view sql, std::optional<int> bins);

std::string histogram_text(const Histogram& hist, int bar_width = 50);
std::string histogram_csv(const Histogram& hist);
std::string histogram_svg(const Histogram& hist, std::string_view title);

}  // namespace labeldb::info
