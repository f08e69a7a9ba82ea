#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "labeldb/geometry.hpp"
#include "labeldb/store.hpp"

namespace labeldb::filters {

/// True when the box enters the border band of a width x height image. The band is
/// `fraction` of the width on the left and right sides and of the height on top and bottom.
bool touches_border(const Box& box, double image_width, double image_height, double fraction);

/// For each box, the largest share of its own area covered by any single other box.
/// This is not IoU: the denominator is the box's own area. Zero-area boxes get 0.
std::vector<double> max_intersection_ratios(std::span<const Box> boxes);

int64_t filter_empty_images(Session& session);

/// Deletes objects whose box enters the border band. Objects without a box are kept.
int64_t filter_objects_at_border(Session& session, double border_thresh_perc = 0.01);

/// Deletes every object whose max intersection ratio exceeds the threshold. Decisions use the
/// geometry before any deletion.
int64_t filter_objects_by_intersection(Session& session, double intersection_thresh_perc);

int64_t filter_objects_sql(Session& session, std::string_view where_object);
int64_t filter_images_sql(Session& session, std::string_view where_image);

}  // namespace labeldb::filters
