#include "labeldb/filters.hpp"

#include "labeldb/error.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <map>

namespace labeldb::filters {

namespace {

int64_t delete_ids(Session& session, const std::vector<int64_t>& ids)
{
    constexpr size_t kChunk = 500;
    int64_t deleted = 0;
    sqlite::Savepoint savepoint(session.writer());
    for (size_t i = 0; i < ids.size(); i += kChunk) {
        auto last = ids.begin() + std::min(ids.size(), i + kChunk);
        deleted += session.delete_objects_where(
            fmt::format("objectid IN ({})", fmt::join(ids.begin() + i, last, ",")));
    }
    savepoint.release();
    return deleted;
}

}  // namespace

bool touches_border(const Box& box, double image_width, double image_height, double fraction)
{
    const double tw = fraction * image_width;
    const double th = fraction * image_height;
    return box.x < tw || box.y < th || box.right() > image_width - tw || box.bottom() > image_height - th;
}

std::vector<double> max_intersection_ratios(std::span<const Box> boxes)
{
    std::vector<double> ratios(boxes.size(), 0.0);
    for (size_t i = 0; i < boxes.size(); ++i) {
        const double own = boxes[i].area();
        if (own <= 0) {
            continue;
        }
        for (size_t j = 0; j < boxes.size(); ++j) {
            if (i != j) {
                ratios[i] = std::max(ratios[i], intersection_area(boxes[i], boxes[j]) / own);
            }
        }
    }
    return ratios;
}

int64_t filter_empty_images(Session& session)
{
    int64_t deleted = session.delete_images_where("imagefile NOT IN (SELECT DISTINCT imagefile FROM objects)");
    spdlog::info("Deleted {} empty images.", deleted);
    return deleted;
}

int64_t filter_objects_at_border(Session& session, double border_thresh_perc)
{
    std::vector<int64_t> doomed;
    const int64_t total = session.count_objects();
    {
        auto stmt = session.reader().prepare(
            "SELECT objects.objectid, objects.x, objects.y, objects.width, objects.height, images.width, "
            "images.height, objects.imagefile FROM objects LEFT JOIN images ON objects.imagefile = images.imagefile "
            "WHERE objects.x IS NOT NULL AND objects.y IS NOT NULL AND objects.width IS NOT NULL "
            "AND objects.height IS NOT NULL ORDER BY objects.objectid");
        while (stmt.step()) {
            if (stmt.is_null(5) || stmt.is_null(6)) {
                throw Error(fmt::format("image '{}' has no width/height; cannot test borders", stmt.column_text(7)));
            }
            Box box{stmt.column_double(1), stmt.column_double(2), stmt.column_double(3), stmt.column_double(4)};
            if (touches_border(box, stmt.column_double(5), stmt.column_double(6), border_thresh_perc)) {
                doomed.push_back(stmt.column_int(0));
            }
        }
    }
    int64_t deleted = delete_ids(session, doomed);
    spdlog::info("Deleted {} out of {} objects.", deleted, total);
    return deleted;
}

int64_t filter_objects_by_intersection(Session& session, double intersection_thresh_perc)
{
    std::map<std::string, std::vector<std::pair<int64_t, Box>>> by_image;
    const int64_t total = session.count_objects();
    {
        auto stmt = session.reader().prepare(
            "SELECT objectid, imagefile, x, y, width, height FROM objects WHERE x IS NOT NULL AND y IS NOT NULL "
            "AND width IS NOT NULL AND height IS NOT NULL ORDER BY objectid");
        while (stmt.step()) {
            by_image[stmt.column_text(1)].emplace_back(
                stmt.column_int(0),
                Box{stmt.column_double(2), stmt.column_double(3), stmt.column_double(4), stmt.column_double(5)});
        }
    }
    std::vector<int64_t> doomed;
    std::vector<Box> boxes;
    for (const auto& [imagefile, objects] : by_image) {
        boxes.clear();
        for (const auto& [id, box] : objects) {
            boxes.push_back(box);
        }
        auto ratios = max_intersection_ratios(boxes);
        for (size_t i = 0; i < objects.size(); ++i) {
            if (ratios[i] > intersection_thresh_perc) {
                doomed.push_back(objects[i].first);
            }
        }
    }
    int64_t deleted = delete_ids(session, doomed);
    spdlog::info("Deleted {} out of {} objects.", deleted, total);
    return deleted;
}

int64_t filter_objects_sql(Session& session, std::string_view where_object)
{
    const int64_t before = session.count_objects();
    int64_t deleted = session.delete_objects_where(where_object);
    spdlog::info("Deleted {} out of {} objects.", deleted, before);
    return deleted;
}

int64_t filter_images_sql(Session& session, std::string_view where_image)
{
    const int64_t before = session.count_images();
    int64_t deleted = session.delete_images_where(where_image);
    spdlog::info("Deleted {} out of {} images.", deleted, before);
    return deleted;
}

}  // namespace labeldb::filters
