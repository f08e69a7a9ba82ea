#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "labeldb/formats.hpp"
#include "labeldb/geometry.hpp"
#include "labeldb/media.hpp"
#include "labeldb/store.hpp"

namespace labeldb::evaluate {

namespace fs = std::filesystem;

struct Detection {
    std::string imagefile;
    std::string name;
    Box box;
    double score = 1.0;
    int64_t objectid = 0;  // tie-breaker for equal scores
};

struct GroundTruth {
    std::string imagefile;
    std::string name;
    Box box;
};

struct ClassCounts {
    int64_t tp = 0;
    int64_t fp = 0;
    int64_t fn = 0;
};

struct DetectionResult {
    std::map<std::string, double> ap;  // classes present in ground truth
    double mean_ap = 0;
    std::map<std::string, ClassCounts> counts;
};

/// Area under the precision/recall curve after making precision non-increasing
/// from the right. `hits` are the TP flags of predictions in ranked order.
double average_precision(const std::vector<bool>& hits, int64_t num_ground_truth);

/// Greedy per-class matching in descending score order (ties by objectid).
DetectionResult evaluate_detections(const std::vector<Detection>& predictions,
                                    const std::vector<GroundTruth>& ground_truth, double iou_thresh);

/// Scores the session's objects against a ground-truth database over their shared images.
DetectionResult evaluate_detection(Session& predictions, const fs::path& gt_db_file, double iou_thresh = 0.5,
                                   std::optional<std::string_view> where_object = std::nullopt);

struct PixelCounts {
    int64_t intersection = 0;
    int64_t union_ = 0;
};

struct SegmentationResult {
    std::map<int, double> iou;  // classes with nonzero union
    double mean_iou = 0;
    std::map<int, PixelCounts> pixels;
    std::vector<formats::SkippedFile> skipped;
};

/// Adds per-class pixel counts of one mask pair. Labels outside `class_ids` are ignored when it is given.
void accumulate_masks(const media::PixelBuffer& prediction, const media::PixelBuffer& ground_truth,
                      const std::optional<std::vector<int>>& class_ids, std::map<int, PixelCounts>& pixels);

/// Fills iou and mean_iou from pixels.
void finalize(SegmentationResult& result);

SegmentationResult evaluate_segmentation(Session& predictions, const fs::path& gt_db_file,
                                         const std::optional<std::vector<int>>& class_ids = std::nullopt);

std::string to_text(const DetectionResult& result);
std::string to_text(const SegmentationResult& result);
std::string to_csv(const DetectionResult& result);
std::string to_csv(const SegmentationResult& result);

}  // namespace labeldb::evaluate
