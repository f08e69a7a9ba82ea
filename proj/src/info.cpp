#include "labeldb/info.hpp"

#include "labeldb/error.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace labeldb::info {

namespace {

std::vector<int64_t> distinct_ints(sqlite::Connection& conn, const char* sql)
{
    std::vector<int64_t> values;
    auto stmt = conn.prepare(sql);
    while (stmt.step()) {
        values.push_back(stmt.column_int(0));
    }
    return values;
}

std::string quoted_list(const std::vector<std::string>& items)
{
    std::vector<std::string> quoted;
    for (const auto& item : items) {
        quoted.push_back(fmt::format("'{}'", item));
    }
    return fmt::format("[{}]", fmt::join(quoted, ", "));
}

std::string quoted_map(const std::map<std::string, int64_t>& items)
{
    std::vector<std::string> quoted;
    for (const auto& [key, value] : items) {
        quoted.push_back(fmt::format("'{}': {}", key, value));
    }
    return fmt::format("{{{}}}", fmt::join(quoted, ", "));
}

std::optional<double> parse_real(std::string_view text)
{
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) {
        text.remove_prefix(1);
    }
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) {
        text.remove_suffix(1);
    }
    double value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) {
        return std::nullopt;
    }
    return value;
}

}  // namespace

std::string describe_distinct(const std::vector<int64_t>& values)
{
    if (values.size() == 1) {
        return std::to_string(values.front());
    }
    return fmt::format("{} different values", values.size());
}

Summary summarize(Session& session, bool images_by_dir, bool objects_by_image)
{
    auto& conn = session.reader();
    Summary s;
    s.num_images = session.count_images();
    s.num_objects = session.count_objects();
    s.num_masks = conn.query_int("SELECT COUNT(*) FROM images WHERE maskfile IS NOT NULL").value_or(0);
    s.matches = conn.query_int("SELECT COUNT(DISTINCT match) FROM matches").value_or(0);
    s.image_widths = distinct_ints(conn, "SELECT DISTINCT width FROM images WHERE width IS NOT NULL ORDER BY width");
    s.image_heights =
        distinct_ints(conn, "SELECT DISTINCT height FROM images WHERE height IS NOT NULL ORDER BY height");
    // Walks the key index one distinct value at a time instead of scanning every property row.
    auto keys = conn.prepare(
        "WITH RECURSIVE k(key) AS (SELECT MIN(key) FROM properties "
        "UNION ALL SELECT (SELECT MIN(key) FROM properties WHERE key > k.key) FROM k WHERE k.key IS NOT NULL) "
        "SELECT key FROM k WHERE key IS NOT NULL");
    while (keys.step()) {
        s.properties.push_back(keys.column_text(0));
    }
    if (images_by_dir) {
        std::map<std::string, int64_t> dirs;
        auto stmt = conn.prepare("SELECT imagefile FROM images");
        while (stmt.step()) {
            ++dirs[fs::path(stmt.column_text(0)).parent_path().generic_string()];
        }
        s.images_by_dir = std::move(dirs);
    }
    if (objects_by_image) {
        std::map<std::string, int64_t> counts;
        auto stmt = conn.prepare(
            "SELECT images.imagefile, COUNT(objects.objectid) FROM images "
            "LEFT JOIN objects ON objects.imagefile = images.imagefile GROUP BY images.imagefile");
        while (stmt.step()) {
            counts[stmt.column_text(0)] = stmt.column_int(1);
        }
        s.objects_by_image = std::move(counts);
    }
    return s;
}

std::string to_text(const Summary& s)
{
    std::string out;
    auto line = [&out](std::string_view key, const std::string& value) { out += fmt::format("{}: {}\n", key, value); };
    line("image height", describe_distinct(s.image_heights));
    line("image width", describe_distinct(s.image_widths));
    if (s.images_by_dir) {
        line("images by dir", quoted_map(*s.images_by_dir));
    }
    line("matches", std::to_string(s.matches));
    line("num images", std::to_string(s.num_images));
    line("num masks", std::to_string(s.num_masks));
    line("num objects", std::to_string(s.num_objects));
    if (s.objects_by_image) {
        line("objects by image", quoted_map(*s.objects_by_image));
    }
    line("properties", quoted_list(s.properties));
    return out;
}

nlohmann::json to_json(const Summary& s)
{
    nlohmann::json j;
    j["image height"] = describe_distinct(s.image_heights);
    j["image width"] = describe_distinct(s.image_widths);
    j["matches"] = s.matches;
    j["num images"] = s.num_images;
    j["num masks"] = s.num_masks;
    j["num objects"] = s.num_objects;
    j["properties"] = s.properties;
    if (s.images_by_dir) {
        j["images by dir"] = *s.images_by_dir;
    }
    if (s.objects_by_image) {
        j["objects by image"] = *s.objects_by_image;
    }
    return j;
}

int sturges_bins(int64_t n)
{
    if (n <= 1) {
        return 1;
    }
    return static_cast<int>(std::ceil(std::log2(static_cast<double>(n)))) + 1;
}

Histogram make_histogram(const std::vector<double>& values, std::optional<int> bins, int64_t unparseable)
{
    Histogram hist;
    hist.unparseable = unparseable;
    hist.values = static_cast<int64_t>(values.size());
    if (values.empty()) {
        return hist;
    }
    const int count = bins.value_or(sturges_bins(hist.values));
    if (count <= 0) {
        throw Error("bin count must be positive");
    }
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    const double width = (hi - lo) / count;
    for (int i = 0; i < count; ++i) {
        hist.bins.push_back({lo + width * i, i + 1 == count ? hi : lo + width * (i + 1), 0});
    }
    for (double v : values) {
        int index = width > 0 ? static_cast<int>(std::floor((v - lo) / width)) : 0;
        hist.bins[std::clamp(index, 0, count - 1)].count++;
    }
    return hist;
}

Histogram histogram_from_query(Session& session, std::string_view sql, std::optional<int> bins)
{
    auto stmt = session.reader().prepare(sql);
    if (stmt.column_count() != 1) {
        throw QueryError(fmt::format("histogram query must return exactly one column, got {}", stmt.column_count()));
    }
    std::vector<double> values;
    int64_t unparseable = 0;
    while (stmt.step()) {
        if (auto value = stmt.is_null(0) ? std::nullopt : parse_real(stmt.column_text(0))) {
            values.push_back(*value);
        } else {
            ++unparseable;
        }
    }
    if (unparseable > 0) {
        spdlog::warn("{} values could not be parsed as numbers and were not plotted", unparseable);
    }
    if (values.empty()) {
        spdlog::warn("the histogram query returned no numeric values");
    }
    return make_histogram(values, bins, unparseable);
}

std::string histogram_text(const Histogram& hist, int bar_width)
{
    int64_t peak = 0;
    for (const auto& bin : hist.bins) {
        peak = std::max(peak, bin.count);
    }
    std::string out;
    for (size_t i = 0; i < hist.bins.size(); ++i) {
        const auto& bin = hist.bins[i];
        const int length = peak > 0 ? static_cast<int>(bin.count * bar_width / peak) : 0;
        out += fmt::format("[{:>12.6g}, {:>12.6g}{} {:>8} {}\n", bin.low, bin.high, i + 1 == hist.bins.size() ? "]" : ")",
                           bin.count, std::string(static_cast<size_t>(length), '#'));
    }
    return out;
}

std::string histogram_csv(const Histogram& hist)
{
    std::string out = "bin_low,bin_high,count\r\n";
    for (const auto& bin : hist.bins) {
        out += fmt::format("{},{},{}\r\n", bin.low, bin.high, bin.count);
    }
    return out;
}

std::string histogram_svg(const Histogram& hist, std::string_view title)
{
    constexpr int kWidth = 640;
    constexpr int kHeight = 400;
    constexpr int kMargin = 50;
    const int plot_w = kWidth - 2 * kMargin;
    const int plot_h = kHeight - 2 * kMargin;
    int64_t peak = 1;
    for (const auto& bin : hist.bins) {
        peak = std::max(peak, bin.count);
    }
    std::string escaped;
    for (char c : title) {
        switch (c) {
        case '<':
            escaped += "&lt;";
            break;
        case '>':
            escaped += "&gt;";
            break;
        case '&':
            escaped += "&amp;";
            break;
        case '"':
            escaped += "&quot;";
            break;
        default:
            escaped += c;
        }
    }
    const int axis_y = kMargin + plot_h;
    std::string svg = fmt::format(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{0}\" height=\"{1}\" "
        "viewBox=\"0 0 {0} {1}\">\n"
        "<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n"
        "<text x=\"{2}\" y=\"30\" font-family=\"sans-serif\" font-size=\"14\">{3}</text>\n"
        "<line x1=\"{2}\" y1=\"{4}\" x2=\"{5}\" y2=\"{4}\" stroke=\"black\"/>\n"
        "<line x1=\"{2}\" y1=\"{2}\" x2=\"{2}\" y2=\"{4}\" stroke=\"black\"/>\n",
        kWidth, kHeight, kMargin, escaped, axis_y, kMargin + plot_w);
    if (!hist.bins.empty()) {
        const double bar_w = double(plot_w) / hist.bins.size();
        for (size_t i = 0; i < hist.bins.size(); ++i) {
            const double h = double(hist.bins[i].count) / peak * plot_h;
            svg += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"steelblue\" "
                               "stroke=\"white\"><title>[{}, {}]: {}</title></rect>\n",
                               kMargin + bar_w * i, kMargin + plot_h - h, bar_w, h, hist.bins[i].low,
                               hist.bins[i].high, hist.bins[i].count);
        }
        svg += fmt::format("<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{:.6g}</text>\n",
                           kMargin, kMargin + plot_h + 16, hist.bins.front().low);
        svg += fmt::format(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{:.6g}</text>\n",
            kMargin + plot_w, kMargin + plot_h + 16, hist.bins.back().high);
        svg += fmt::format(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            kMargin - 4, kMargin + 4, peak);
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace labeldb::info
