#include "labeldb/modify.hpp"

#include "labeldb/error.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace labeldb::modify {

namespace {

void update_box(sqlite::Statement& stmt, int64_t objectid, const Box& box)
{
    stmt.bind(1, box.x).bind(2, box.y).bind(3, box.width).bind(4, box.height).bind(5, objectid);
    stmt.run();
}

constexpr const char* kUpdateBoxSql = "UPDATE objects SET x = ?, y = ?, width = ?, height = ? WHERE objectid = ?";

// Copies the given images and everything attached to them, keeping ids.
void copy_images(const std::vector<ImageRecord>& images, const std::vector<const ObjectEntry*>& objects,
                 Session& dest)
{
    auto& conn = dest.writer();
    sqlite::Savepoint savepoint(conn);
    for (const auto& image : images) {
        dest.add_image(image);
    }
    auto insert_object = conn.prepare(
        "INSERT INTO objects (objectid, imagefile, x, y, width, height, name, score) VALUES (?, ?, ?, ?, ?, ?, ?, ?)");
    auto insert_property = conn.prepare("INSERT INTO properties (id, objectid, key, value) VALUES (?, ?, ?, ?)");
    auto insert_point = conn.prepare("INSERT INTO polygons (id, objectid, x, y, name) VALUES (?, ?, ?, ?, ?)");
    auto insert_match = conn.prepare("INSERT INTO matches (objectid, match) VALUES (?, ?)");
    for (const auto* entry : objects) {
        const auto& o = entry->object;
        insert_object.bind(1, o.objectid).bind(2, o.imagefile);
        if (o.box) {
            insert_object.bind(3, o.box->x).bind(4, o.box->y).bind(5, o.box->width).bind(6, o.box->height);
        }
        insert_object.bind(7, o.name).bind(8, o.score);
        insert_object.run();
        for (const auto& p : entry->properties) {
            insert_property.bind(1, p.id).bind(2, p.objectid).bind(3, p.key).bind(4, p.value);
            insert_property.run();
        }
        for (const auto& p : entry->polygon) {
            insert_point.bind(1, p.id).bind(2, p.objectid).bind(3, p.x).bind(4, p.y).bind(5, p.name);
            insert_point.run();
        }
        for (int64_t match : entry->matches) {
            insert_match.bind(1, o.objectid).bind(2, match);
            insert_match.run();
        }
    }
    savepoint.release();
}

}  // namespace

int64_t expand_boxes(Session& session, double expand_perc)
{
    auto objects = session.objects("x IS NOT NULL AND y IS NOT NULL AND width IS NOT NULL AND height IS NOT NULL");
    auto& conn = session.writer();
    sqlite::Savepoint savepoint(conn);
    auto stmt = conn.prepare(kUpdateBoxSql);
    for (const auto& entry : objects) {
        update_box(stmt, entry.object.objectid, expanded(*entry.object.box, expand_perc));
    }
    savepoint.release();
    return static_cast<int64_t>(objects.size());
}

int64_t clamp_boxes_to_image(Session& session)
{
    auto objects = session.objects("x IS NOT NULL AND y IS NOT NULL AND width IS NOT NULL AND height IS NOT NULL");
    auto& conn = session.writer();
    sqlite::Savepoint savepoint(conn);
    auto stmt = conn.prepare(kUpdateBoxSql);
    int64_t changed = 0;
    for (const auto& entry : objects) {
        if (!entry.image.width || !entry.image.height) {
            throw Error(fmt::format("image '{}' has no width/height; cannot clamp", entry.image.imagefile));
        }
        const Box& box = *entry.object.box;
        const double x1 = std::clamp(box.x, 0.0, double(*entry.image.width));
        const double y1 = std::clamp(box.y, 0.0, double(*entry.image.height));
        const double x2 = std::clamp(box.right(), x1, double(*entry.image.width));
        const double y2 = std::clamp(box.bottom(), y1, double(*entry.image.height));
        Box clamped{x1, y1, x2 - x1, y2 - y1};
        if (!(clamped == box)) {
            update_box(stmt, entry.object.objectid, clamped);
            ++changed;
        }
    }
    savepoint.release();
    return changed;
}

int64_t polygons_to_boxes(Session& session)
{
    std::vector<std::pair<int64_t, Box>> boxes;
    {
        auto stmt = session.reader().prepare(
            "SELECT objectid, MIN(x), MIN(y), MAX(x), MAX(y) FROM polygons GROUP BY objectid ORDER BY objectid");
        while (stmt.step()) {
            const double x0 = stmt.column_double(1);
            const double y0 = stmt.column_double(2);
            boxes.emplace_back(stmt.column_int(0), Box{x0, y0, stmt.column_double(3) - x0, stmt.column_double(4) - y0});
        }
    }
    auto& conn = session.writer();
    sqlite::Savepoint savepoint(conn);
    auto stmt = conn.prepare(kUpdateBoxSql);
    for (const auto& [objectid, box] : boxes) {
        update_box(stmt, objectid, box);
    }
    savepoint.release();
    return static_cast<int64_t>(boxes.size());
}

formats::ImportReport add_database(Session& session, const fs::path& other_db)
{
    auto other = Session::open(other_db, std::nullopt);
    formats::ImportReport report;

    auto other_images = other.images();
    std::vector<ImageRecord> to_add;
    std::vector<ImageRecord> to_fill;
    for (const auto& image : other_images) {
        auto existing = session.image(image.imagefile);
        if (!existing) {
            to_add.push_back(image);
            continue;
        }
        auto conflicts = [](const std::optional<int64_t>& a, const std::optional<int64_t>& b) {
            return a && b && *a != *b;
        };
        if (conflicts(existing->width, image.width) || conflicts(existing->height, image.height)) {
            throw Error(fmt::format("image '{}' has conflicting dimensions in the two databases", image.imagefile));
        }
        if ((!existing->width && image.width) || (!existing->height && image.height)) {
            existing->width = existing->width ? existing->width : image.width;
            existing->height = existing->height ? existing->height : image.height;
            to_fill.push_back(*existing);
        }
    }

    auto other_objects = other.objects();
    const int64_t match_offset = session.next_match_value();

    auto& conn = session.writer();
    sqlite::Savepoint savepoint(conn);
    for (const auto& image : to_add) {
        session.add_image(image);
    }
    for (const auto& image : to_fill) {
        session.update_image(image);
    }
    for (const auto& entry : other_objects) {
        int64_t objectid = session.add_object(entry.object);
        for (const auto& p : entry.properties) {
            session.add_property(objectid, p.key, p.value);
        }
        for (const auto& p : entry.polygon) {
            session.add_polygon_point(objectid, p.x, p.y, p.name);
        }
        for (int64_t match : entry.matches) {
            session.add_match(objectid, match + match_offset);
        }
    }
    savepoint.release();

    report.files_scanned = 1;
    report.images_added = static_cast<int64_t>(to_add.size());
    report.objects_added = static_cast<int64_t>(other_objects.size());
    spdlog::info("Added {} images and {} objects from {}.", report.images_added, report.objects_added,
                 other_db.string());
    return report;
}

std::vector<std::vector<std::string>> split_items(std::vector<std::string> items, const std::vector<double>& fractions,
                                                  uint64_t seed)
{
    if (fractions.empty()) {
        throw Error("at least one fraction is required");
    }
    for (double f : fractions) {
        if (!(f > 0.0 && f <= 1.0)) {
            throw Error(fmt::format("fraction {} is outside (0, 1]", f));
        }
    }
    const double sum = std::accumulate(fractions.begin(), fractions.end(), 0.0);
    constexpr double kSlack = 1e-9;
    if (sum > 1.0 + kSlack) {
        throw Error(fmt::format("fractions exceed 1 (sum is {})", sum));
    }

    std::mt19937_64 rng(seed);
    std::shuffle(items.begin(), items.end(), rng);

    const auto n = static_cast<double>(items.size());
    std::vector<size_t> counts;
    size_t assigned = 0;
    for (double f : fractions) {
        counts.push_back(static_cast<size_t>(std::floor(f * n + kSlack)));
        assigned += counts.back();
    }
    const size_t total = std::min(items.size(), static_cast<size_t>(std::floor(std::min(sum, 1.0) * n + kSlack)));
    if (total > assigned) {
        counts.front() += total - assigned;
    }

    std::vector<std::vector<std::string>> splits;
    auto it = items.begin();
    for (size_t count : counts) {
        splits.emplace_back(it, it + static_cast<std::ptrdiff_t>(count));
        it += static_cast<std::ptrdiff_t>(count);
    }
    return splits;
}

std::vector<int64_t> split_database(Session& session, const std::vector<double>& fractions,
                                    const std::vector<fs::path>& out_names, uint64_t seed)
{
    if (fractions.size() != out_names.size()) {
        throw Error(fmt::format("{} fractions but {} output names", fractions.size(), out_names.size()));
    }
    auto images = session.images();
    std::vector<std::string> names;
    std::map<std::string, const ImageRecord*> image_by_name;
    for (const auto& image : images) {
        names.push_back(image.imagefile);
        image_by_name.emplace(image.imagefile, &image);
    }
    auto splits = split_items(std::move(names), fractions, seed);

    auto objects = session.objects();
    std::map<std::string, std::vector<const ObjectEntry*>> objects_by_image;
    for (const auto& entry : objects) {
        objects_by_image[entry.object.imagefile].push_back(&entry);
    }

    std::vector<int64_t> counts;
    for (size_t i = 0; i < splits.size(); ++i) {
        std::sort(splits[i].begin(), splits[i].end());
        std::vector<ImageRecord> part_images;
        std::vector<const ObjectEntry*> part_objects;
        for (const auto& name : splits[i]) {
            part_images.push_back(*image_by_name.at(name));
            auto it = objects_by_image.find(name);
            if (it != objects_by_image.end()) {
                part_objects.insert(part_objects.end(), it->second.begin(), it->second.end());
            }
        }
        std::sort(part_objects.begin(), part_objects.end(),
                  [](const ObjectEntry* a, const ObjectEntry* b) { return a->object.objectid < b->object.objectid; });
        auto dest = Session::open(std::nullopt, out_names[i]);
        copy_images(part_images, part_objects, dest);
        dest.commit();
        counts.push_back(static_cast<int64_t>(part_images.size()));
        spdlog::info("Wrote {} images to {}.", part_images.size(), out_names[i].string());
    }
    return counts;
}

CropReport crop_objects(Session& session, const CropOptions& options)
{
    if (options.edges != media::EdgePolicy::original && (options.target_width <= 0 || options.target_height <= 0)) {
        throw Error("target_width and target_height must be positive");
    }
    if (options.jpeg_quality < 1 || options.jpeg_quality > 100) {
        throw Error(fmt::format("JPEG quality {} is outside [1, 100]", options.jpeg_quality));
    }
    fs::create_directories(options.image_pictures_dir);

    struct Crop {
        const ObjectEntry* entry;
        ImageRecord image;
        media::CropResult result;
    };
    CropReport report;
    std::vector<Crop> crops;
    std::vector<int64_t> skipped_ids;

    auto objects = session.objects();
    std::string cached_name;
    std::optional<media::PixelBuffer> cached_pixels;
    for (const auto& entry : objects) {
        const auto& object = entry.object;
        fs::path out_path = options.image_pictures_dir / fmt::format("{}.jpg", object.objectid);
        auto skip = [&](std::string reason) {
            spdlog::warn("skipping object {}: {}", object.objectid, reason);
            report.skipped.push_back({out_path, std::move(reason)});
            skipped_ids.push_back(object.objectid);
        };
        if (!object.box) {
            skip("object has no bounding box");
            continue;
        }
        try {
            if (cached_name != object.imagefile || !cached_pixels) {
                cached_pixels.reset();
                cached_name = object.imagefile;
                cached_pixels = media::read_image(session.rootdir(), object.imagefile);
            }
            auto result = media::crop_and_resize(*cached_pixels, *object.box, options.target_width,
                                                 options.target_height, options.edges);
            media::write_jpeg(out_path, result.pixels, options.jpeg_quality);
            ImageRecord image;
            image.imagefile = session.relative_to_root(out_path);
            image.width = result.pixels.width;
            image.height = result.pixels.height;
            crops.push_back({&entry, std::move(image), std::move(result)});
            ++report.written;
        } catch (const Error& e) {
            skip(e.what());
        }
    }

    auto& conn = session.writer();
    sqlite::Savepoint savepoint(conn);
    if (!skipped_ids.empty()) {
        session.delete_objects_where(fmt::format("objectid IN ({})", fmt::join(skipped_ids, ",")));
    }
    auto move_object = conn.prepare(
        "UPDATE objects SET imagefile = ?, x = ?, y = ?, width = ?, height = ? WHERE objectid = ?");
    auto move_point = conn.prepare("UPDATE polygons SET x = ?, y = ? WHERE id = ?");
    std::set<std::string> crop_names;
    for (const auto& crop : crops) {
        if (session.image(crop.image.imagefile)) {
            session.update_image(crop.image);
        } else {
            session.add_image(crop.image);
        }
        crop_names.insert(crop.image.imagefile);
        const Box& content = crop.result.content;
        move_object.bind(1, crop.image.imagefile)
            .bind(2, content.x)
            .bind(3, content.y)
            .bind(4, content.width)
            .bind(5, content.height)
            .bind(6, crop.entry->object.objectid);
        move_object.run();
        for (const auto& point : crop.entry->polygon) {
            move_point.bind(1, crop.result.map_x(point.x)).bind(2, crop.result.map_y(point.y)).bind(3, point.id);
            move_point.run();
        }
    }
    conn.exec("CREATE TEMP TABLE IF NOT EXISTS crop_images (imagefile TEXT PRIMARY KEY)");
    conn.exec("DELETE FROM temp.crop_images");
    {
        auto keep = conn.prepare("INSERT INTO temp.crop_images VALUES (?)");
        for (const auto& name : crop_names) {
            keep.bind(1, name);
            keep.run();
        }
    }
    session.delete_images_where("imagefile NOT IN (SELECT imagefile FROM temp.crop_images)");
    conn.exec("DELETE FROM temp.crop_images");
    savepoint.release();
    spdlog::info("Wrote {} crops to {}.", report.written, options.image_pictures_dir.string());
    return report;
}

}  // namespace labeldb::modify
