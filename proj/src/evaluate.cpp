#include "labeldb/evaluate.hpp"

#include "labeldb/error.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <set>

namespace labeldb::evaluate {

namespace {

std::set<std::string> shared_images(Session& a, Session& b)
{
    std::set<std::string> left;
    for (const auto& image : a.images()) {
        left.insert(image.imagefile);
    }
    std::set<std::string> shared;
    for (const auto& image : b.images()) {
        if (left.count(image.imagefile)) {
            shared.insert(image.imagefile);
        }
    }
    return shared;
}

}  // namespace

double average_precision(const std::vector<bool>& hits, int64_t num_ground_truth)
{
    if (num_ground_truth <= 0) {
        return 0.0;
    }
    // Sentinels: recall 0 and 1 at the ends, precision 0 beyond the curve.
    std::vector<double> recall{0.0};
    std::vector<double> precision{0.0};
    int64_t tp = 0;
    for (size_t i = 0; i < hits.size(); ++i) {
        tp += hits[i] ? 1 : 0;
        recall.push_back(double(tp) / double(num_ground_truth));
        precision.push_back(double(tp) / double(i + 1));
    }
    recall.push_back(1.0);
    precision.push_back(0.0);
    for (size_t i = precision.size() - 1; i > 0; --i) {
        precision[i - 1] = std::max(precision[i - 1], precision[i]);
    }
    double ap = 0.0;
    for (size_t i = 1; i < recall.size(); ++i) {
        ap += (recall[i] - recall[i - 1]) * precision[i];
    }
    return ap;
}

DetectionResult evaluate_detections(const std::vector<Detection>& predictions,
                                    const std::vector<GroundTruth>& ground_truth, double iou_thresh)
{
    DetectionResult result;
    std::set<std::string> classes;
    std::map<std::string, int64_t> gt_per_class;
    for (const auto& gt : ground_truth) {
        classes.insert(gt.name);
        ++gt_per_class[gt.name];
    }
    for (const auto& p : predictions) {
        classes.insert(p.name);
    }

    for (const auto& cls : classes) {
        // Unmatched ground truth of this class, per image.
        std::map<std::string, std::vector<std::pair<Box, bool>>> pool;
        for (const auto& gt : ground_truth) {
            if (gt.name == cls) {
                pool[gt.imagefile].emplace_back(gt.box, false);
            }
        }
        std::vector<const Detection*> ranked;
        for (const auto& p : predictions) {
            if (p.name == cls) {
                ranked.push_back(&p);
            }
        }
        std::sort(ranked.begin(), ranked.end(), [](const Detection* a, const Detection* b) {
            if (a->score != b->score) {
                return a->score > b->score;
            }
            return a->objectid < b->objectid;
        });

        std::vector<bool> hits;
        ClassCounts counts;
        for (const auto* p : ranked) {
            double best = -1.0;
            std::pair<Box, bool>* best_gt = nullptr;
            if (auto it = pool.find(p->imagefile); it != pool.end()) {
                for (auto& candidate : it->second) {
                    if (candidate.second) {
                        continue;
                    }
                    const double overlap = iou(p->box, candidate.first);
                    if (overlap > best) {
                        best = overlap;
                        best_gt = &candidate;
                    }
                }
            }
            const bool hit = best_gt != nullptr && best >= iou_thresh;
            if (hit) {
                best_gt->second = true;
                ++counts.tp;
            } else {
                ++counts.fp;
            }
            hits.push_back(hit);
        }
        const int64_t num_gt = gt_per_class.count(cls) ? gt_per_class[cls] : 0;
        counts.fn = num_gt - counts.tp;
        result.counts[cls] = counts;
        if (num_gt > 0) {
            result.ap[cls] = average_precision(hits, num_gt);
        }
    }
    if (!result.ap.empty()) {
        double sum = 0;
        for (const auto& [cls, ap] : result.ap) {
            sum += ap;
        }
        result.mean_ap = sum / double(result.ap.size());
    }
    return result;
}

DetectionResult evaluate_detection(Session& predictions, const fs::path& gt_db_file, double iou_thresh,
                                   std::optional<std::string_view> where_object)
{
    auto gt_session = Session::open(gt_db_file, std::nullopt);
    auto shared = shared_images(predictions, gt_session);
    if (shared.empty()) {
        throw Error(fmt::format("no imagefile is shared between the predictions and {}", gt_db_file.string()));
    }

    std::vector<Detection> detections;
    int64_t boxless = 0;
    for (const auto& entry : predictions.objects(where_object)) {
        if (!shared.count(entry.object.imagefile)) {
            continue;
        }
        if (!entry.object.box) {
            ++boxless;
            continue;
        }
        detections.push_back({entry.object.imagefile, entry.object.name.value_or(""), *entry.object.box,
                              entry.object.score.value_or(1.0), entry.object.objectid});
    }
    std::vector<GroundTruth> truths;
    for (const auto& entry : gt_session.objects(where_object)) {
        if (!shared.count(entry.object.imagefile)) {
            continue;
        }
        if (!entry.object.box) {
            ++boxless;
            continue;
        }
        truths.push_back({entry.object.imagefile, entry.object.name.value_or(""), *entry.object.box});
    }
    if (boxless > 0) {
        spdlog::warn("ignored {} objects without a bounding box", boxless);
    }
    return evaluate_detections(detections, truths, iou_thresh);
}

void accumulate_masks(const media::PixelBuffer& prediction, const media::PixelBuffer& ground_truth,
                      const std::optional<std::vector<int>>& class_ids, std::map<int, PixelCounts>& pixels)
{
    if (prediction.width != ground_truth.width || prediction.height != ground_truth.height) {
        throw Error(fmt::format("mask sizes differ: {}x{} vs {}x{}", prediction.width, prediction.height,
                                ground_truth.width, ground_truth.height));
    }
    std::array<bool, 256> wanted{};
    if (class_ids) {
        for (int id : *class_ids) {
            if (id >= 0 && id < 256) {
                wanted[static_cast<size_t>(id)] = true;
                pixels.try_emplace(id);
            }
        }
    } else {
        wanted.fill(true);
    }
    for (size_t i = 0; i < prediction.data.size(); ++i) {
        const int p = prediction.data[i];
        const int g = ground_truth.data[i];
        if (p == g) {
            if (wanted[p]) {
                auto& c = pixels[p];
                ++c.intersection;
                ++c.union_;
            }
            continue;
        }
        if (wanted[p]) {
            ++pixels[p].union_;
        }
        if (wanted[g]) {
            ++pixels[g].union_;
        }
    }
}

void finalize(SegmentationResult& result)
{
    result.iou.clear();
    for (const auto& [cls, c] : result.pixels) {
        if (c.union_ > 0) {
            result.iou[cls] = double(c.intersection) / double(c.union_);
        }
    }
    result.mean_iou = 0;
    if (!result.iou.empty()) {
        double sum = 0;
        for (const auto& [cls, v] : result.iou) {
            sum += v;
        }
        result.mean_iou = sum / double(result.iou.size());
    }
}

SegmentationResult evaluate_segmentation(Session& predictions, const fs::path& gt_db_file,
                                         const std::optional<std::vector<int>>& class_ids)
{
    auto gt_session = Session::open(gt_db_file, std::nullopt);
    auto shared = shared_images(predictions, gt_session);
    if (shared.empty()) {
        throw Error(fmt::format("no imagefile is shared between the predictions and {}", gt_db_file.string()));
    }
    SegmentationResult result;
    for (const auto& imagefile : shared) {
        auto pred = predictions.image(imagefile);
        auto gt = gt_session.image(imagefile);
        if (!pred->maskfile || !gt->maskfile) {
            spdlog::warn("skipping {}: missing maskfile", imagefile);
            result.skipped.push_back({imagefile, "missing maskfile"});
            continue;
        }
        auto pred_mask = media::read_mask(predictions.rootdir(), *pred->maskfile);
        auto gt_mask = media::read_mask(predictions.rootdir(), *gt->maskfile);
        try {
            accumulate_masks(pred_mask, gt_mask, class_ids, result.pixels);
        } catch (const Error& e) {
            throw Error(fmt::format("{}: {}", imagefile, e.what()));
        }
    }
    finalize(result);
    return result;
}

std::string to_text(const DetectionResult& result)
{
    std::string out;
    for (const auto& [cls, ap] : result.ap) {
        out += fmt::format("AP {}: {:.6f}\n", cls, ap);
    }
    for (const auto& [cls, c] : result.counts) {
        out += fmt::format("counts {}: TP={} FP={} FN={}\n", cls, c.tp, c.fp, c.fn);
    }
    out += fmt::format("mean AP: {:.6f}\n", result.mean_ap);
    return out;
}

std::string to_text(const SegmentationResult& result)
{
    std::string out;
    for (const auto& [cls, value] : result.iou) {
        const auto& c = result.pixels.at(cls);
        out += fmt::format("IoU {}: {:.6f} (intersection={} union={})\n", cls, value, c.intersection, c.union_);
    }
    out += fmt::format("mIoU: {:.6f}\n", result.mean_iou);
    if (!result.skipped.empty()) {
        out += fmt::format("skipped images: {}\n", result.skipped.size());
    }
    return out;
}

std::string to_csv(const DetectionResult& result)
{
    std::string out = "class,ap,tp,fp,fn\r\n";
    for (const auto& [cls, c] : result.counts) {
        auto ap = result.ap.find(cls);
        out += fmt::format("{},{},{},{},{}\r\n", formats::csv_field(cls),
                           ap == result.ap.end() ? std::string() : fmt::format("{}", ap->second), c.tp, c.fp, c.fn);
    }
    return out;
}

std::string to_csv(const SegmentationResult& result)
{
    std::string out = "class,iou,intersection,union\r\n";
    for (const auto& [cls, c] : result.pixels) {
        auto iou = result.iou.find(cls);
        out += fmt::format("{},{},{},{}\r\n", cls, iou == result.iou.end() ? std::string() : fmt::format("{}", iou->second),
                           c.intersection, c.union_);
    }
    return out;
}

}  // namespace labeldb::evaluate
