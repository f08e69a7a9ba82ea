// Built-in sub-commands: argument schemas and thin handlers over the library modules.

#include "labeldb/cli.hpp"
#include "labeldb/error.hpp"
#include "labeldb/evaluate.hpp"
#include "labeldb/filters.hpp"
#include "labeldb/formats.hpp"
#include "labeldb/info.hpp"
#include "labeldb/modify.hpp"
#include "labeldb/serve.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <fstream>
#include <ostream>

#include <pthread.h>

namespace labeldb::cli {

namespace {

ArgSpec required(std::string name, ArgKind kind, std::string help)
{
    return ArgSpec{std::move(name), kind, std::move(help), true, false, std::nullopt, {}};
}

ArgSpec optional_arg(std::string name, ArgKind kind, std::string help, std::optional<std::string> default_value = {})
{
    return ArgSpec{std::move(name), kind, std::move(help), false, false, std::move(default_value), {}};
}

ArgSpec flag(std::string name, std::string help)
{
    return ArgSpec{std::move(name), ArgKind::flag, std::move(help), false, false, std::nullopt, {}};
}

void write_text_file(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(fmt::format("cannot write '{}'", path.string()));
    }
    out << text;
    if (!out) {
        throw Error(fmt::format("failed writing '{}'", path.string()));
    }
}

void log_import(const formats::ImportReport& report)
{
    spdlog::info("Imported {} images and {} objects; skipped {} files.", report.images_added, report.objects_added,
                 report.skipped.size());
}

void register_formats(Registry& r)
{
    r.add({"importKitti",
           "Import images and KITTI object labels.",
           {required("images_dir", ArgKind::text, "directory with the image files"),
            optional_arg("detection_dir", ArgKind::text, "directory with one label .txt per image")},
           [](Session& session, const ParsedArgs& args) {
               std::optional<fs::path> labels;
               if (auto dir = args.opt_text("detection_dir")) {
                   labels = *dir;
               }
               log_import(formats::import_kitti(session, args.text("images_dir"), labels));
           }});

    r.add({"importPascalVoc",
           "Import images and PASCAL VOC XML annotations.",
           {required("images_dir", ArgKind::text, "directory with the image files"),
            required("annotations_dir", ArgKind::text, "directory with one .xml per image")},
           [](Session& session, const ParsedArgs& args) {
               log_import(formats::import_pascal_voc(session, args.text("images_dir"), args.text("annotations_dir")));
           }});

    r.add({"importLabelme",
           "Import images and LabelMe XML annotations.",
           {required("images_dir", ArgKind::text, "directory with the image files"),
            required("annotations_dir", ArgKind::text, "directory with one .xml per image")},
           [](Session& session, const ParsedArgs& args) {
               log_import(formats::import_labelme(session, args.text("images_dir"), args.text("annotations_dir")));
           }});

    r.add({"exportKitti",
           "Write one KITTI label file per image.",
           {required("detection_dir", ArgKind::text, "output directory for the label files")},
           [](Session& session, const ParsedArgs& args) {
               const auto written = formats::export_kitti(session, args.text("detection_dir"));
               spdlog::info("Wrote {} label files.", written);
           }});

    r.add({"exportCsv",
           "Write every object as one CSV row.",
           {required("out_path", ArgKind::text, "CSV file to write")},
           [](Session& session, const ParsedArgs& args) {
               const auto rows = formats::export_csv(session, args.text("out_path"));
               spdlog::info("Wrote {} rows.", rows);
           }});
}

void register_filters(Registry& r)
{
    r.add({"filterEmptyImages",
           "Delete images that have no objects.",
           {},
           [](Session& session, const ParsedArgs&) { filters::filter_empty_images(session); }});

    r.add({"filterObjectsAtBorder",
           "Delete objects whose box enters a band along the image border.",
           {optional_arg("border_thresh_perc", ArgKind::real, "band width as a fraction of the image size", "0.01")},
           [](Session& session, const ParsedArgs& args) {
               filters::filter_objects_at_border(session, args.real("border_thresh_perc"));
           }});

    r.add({"filterObjectsByIntersection",
           "Delete objects covered by another object of the same image above a fraction of their own area.",
           {required("intersection_thresh_perc", ArgKind::real, "largest allowed covered fraction")},
           [](Session& session, const ParsedArgs& args) {
               filters::filter_objects_by_intersection(session, args.real("intersection_thresh_perc"));
           }});

    r.add({"filterObjectsSQL",
           "Delete objects matching an SQL predicate over the objects table.",
           {required("where_object", ArgKind::text, "predicate, e.g. \"width < 64 AND name = 'car'\"")},
           [](Session& session, const ParsedArgs& args) {
               filters::filter_objects_sql(session, args.text("where_object"));
           }});

    r.add({"filterImagesSQL",
           "Delete images matching an SQL predicate over the images table, with their objects.",
           {required("where_image", ArgKind::text, "predicate, e.g. \"width < 100\"")},
           [](Session& session, const ParsedArgs& args) {
               filters::filter_images_sql(session, args.text("where_image"));
           }});
}

void register_modify(Registry& r)
{
    r.add({"expandBoxes",
           "Grow every box by a fraction of its size on each side.",
           {required("expand_perc", ArgKind::real, "fraction of the width (height) added left and right (top and bottom)")},
           [](Session& session, const ParsedArgs& args) {
               const auto changed = modify::expand_boxes(session, args.real("expand_perc"));
               spdlog::info("Expanded {} boxes.", changed);
           }});

    r.add({"clampBoxesToImage",
           "Cut boxes to the image frame.",
           {},
           [](Session& session, const ParsedArgs&) {
               const auto changed = modify::clamp_boxes_to_image(session);
               spdlog::info("Clamped {} boxes.", changed);
           }});

    r.add({"polygonsToBoxes",
           "Set the box of each polygon object to the polygon extent.",
           {},
           [](Session& session, const ParsedArgs&) {
               const auto changed = modify::polygons_to_boxes(session);
               spdlog::info("Assigned {} boxes from polygons.", changed);
           }});

    r.add({"addDatabase",
           "Merge another database into the open one.",
           {required("db_file", ArgKind::text, "database to merge")},
           [](Session& session, const ParsedArgs& args) { modify::add_database(session, args.text("db_file")); }});

    r.add({"splitDatabase",
           "Write a seeded random partition of the images into several databases.",
           {required("fractions", ArgKind::real_list, "share of the images for each output"),
            required("out_names", ArgKind::text_list, "one output database per fraction"),
            optional_arg("seed", ArgKind::integer, "shuffle seed", "0")},
           [](Session& session, const ParsedArgs& args) {
               std::vector<fs::path> names;
               for (const auto& name : args.texts("out_names")) {
                   names.emplace_back(name);
               }
               const auto counts =
                   modify::split_database(session, args.reals("fractions"), names, uint64_t(args.integer("seed")));
               for (size_t i = 0; i < counts.size(); ++i) {
                   args.out() << names[i].string() << ": " << counts[i] << "\n";
               }
           }});

    ArgSpec edges = optional_arg("edges", ArgKind::text, "how the box becomes the target size", "distort");
    edges.choices = {"constant", "distort", "original"};
    r.add({"cropObjects",
           "Cut every object out of its image into a new image, replacing the database contents.",
           {required("image_pictures_dir", ArgKind::text, "directory for the crop files"), edges,
            optional_arg("target_width", ArgKind::integer, "crop width in pixels (unused with --edges original)", "0"),
            optional_arg("target_height", ArgKind::integer, "crop height in pixels (unused with --edges original)", "0"),
            optional_arg("jpeg_quality", ArgKind::integer, "JPEG quality of the crop files", "90")},
           [](Session& session, const ParsedArgs& args) {
               modify::CropOptions options;
               options.image_pictures_dir = args.text("image_pictures_dir");
               options.edges = *media::parse_edge_policy(args.text("edges"));
               options.target_width = int(args.integer("target_width"));
               options.target_height = int(args.integer("target_height"));
               options.jpeg_quality = int(args.integer("jpeg_quality"));
               modify::crop_objects(session, options);
           }});
}

void register_info(Registry& r)
{
    r.add({"printInfo",
           "Print a summary of the database.",
           {flag("images_by_dir", "count images per directory"), flag("objects_by_image", "count objects per image")},
           [](Session& session, const ParsedArgs& args) {
               auto summary = info::summarize(session, args.flag("images_by_dir"), args.flag("objects_by_image"));
               args.out() << info::to_text(summary);
           }});

    ArgSpec sql = required("sql", ArgKind::text, "query returning one numeric column");
    sql.positional = true;
    r.add({"plotObjectsHistogram",
           "Bin the values of a single-column query and print the histogram.",
           {sql, optional_arg("bins", ArgKind::integer, "number of bins (default: Sturges' rule)"),
            optional_arg("out_svg", ArgKind::text, "write the histogram as SVG"),
            optional_arg("out_csv", ArgKind::text, "write the bins as CSV")},
           [](Session& session, const ParsedArgs& args) {
               std::optional<int> bins;
               if (auto n = args.opt_integer("bins")) {
                   bins = int(*n);
               }
               const auto query = args.text("sql");
               auto hist = info::histogram_from_query(session, query, bins);
               args.out() << info::histogram_text(hist);
               if (auto path = args.opt_text("out_svg")) {
                   write_text_file(*path, info::histogram_svg(hist, query));
               }
               if (auto path = args.opt_text("out_csv")) {
                   write_text_file(*path, info::histogram_csv(hist));
               }
           }});
}

void register_evaluate(Registry& r)
{
    r.add({"evaluateDetection",
           "Score the open database as detections against a ground-truth database.",
           {required("gt_db_file", ArgKind::text, "ground-truth database"),
            optional_arg("iou_thresh", ArgKind::real, "smallest IoU that counts as a match", "0.5"),
            optional_arg("where_object", ArgKind::text, "predicate restricting objects of both databases"),
            optional_arg("out_csv", ArgKind::text, "write per-class results as CSV")},
           [](Session& session, const ParsedArgs& args) {
               auto where = args.opt_text("where_object");
               auto result = evaluate::evaluate_detection(
                   session, args.text("gt_db_file"), args.real("iou_thresh"),
                   where ? std::optional<std::string_view>(*where) : std::nullopt);
               args.out() << evaluate::to_text(result);
               if (auto path = args.opt_text("out_csv")) {
                   write_text_file(*path, evaluate::to_csv(result));
               }
           }});

    r.add({"evaluateSegmentation",
           "Score the masks of the open database against a ground-truth database.",
           {required("gt_db_file", ArgKind::text, "ground-truth database"),
            optional_arg("class_ids", ArgKind::integer_list, "labels to score (default: every label present)"),
            optional_arg("out_csv", ArgKind::text, "write per-class results as CSV")},
           [](Session& session, const ParsedArgs& args) {
               std::optional<std::vector<int>> class_ids;
               if (args.has("class_ids")) {
                   class_ids.emplace();
                   for (auto id : args.integers("class_ids")) {
                       class_ids->push_back(int(id));
                   }
               }
               auto result = evaluate::evaluate_segmentation(session, args.text("gt_db_file"), class_ids);
               args.out() << evaluate::to_text(result);
               if (auto path = args.opt_text("out_csv")) {
                   write_text_file(*path, evaluate::to_csv(result));
               }
           }});
}

void register_serve(Registry& r)
{
    r.add({"serve",
           "Serve the JSON inspection API until interrupted.",
           {optional_arg("host", ArgKind::text, "address to bind", "127.0.0.1"),
            optional_arg("port", ArgKind::integer, "TCP port", "8080"),
            optional_arg("static_dir", ArgKind::text, "directory of web assets served at /")},
           [](Session& session, const ParsedArgs& args) {
               serve::Options options;
               options.host = args.text("host");
               options.port = int(args.integer("port"));
               if (auto dir = args.opt_text("static_dir")) {
                   options.static_dir = *dir;
               }
               // The server thread inherits the blocked mask; this thread waits for the signal.
               sigset_t signals;
               sigemptyset(&signals);
               sigaddset(&signals, SIGINT);
               sigaddset(&signals, SIGTERM);
               sigset_t previous;
               pthread_sigmask(SIG_BLOCK, &signals, &previous);
               try {
                   serve::Server server(session, options);
                   server.start();
                   int received = 0;
                   sigwait(&signals, &received);
                   spdlog::info("stopping server");
                   server.stop();
               } catch (...) {
                   pthread_sigmask(SIG_SETMASK, &previous, nullptr);
                   throw;
               }
               pthread_sigmask(SIG_SETMASK, &previous, nullptr);
           }});
}

}  // namespace

void register_builtin_ops(Registry& registry)
{
    register_formats(registry);
    register_filters(registry);
    register_modify(registry);
    register_info(registry);
    register_evaluate(registry);
    register_serve(registry);
}

}  // namespace labeldb::cli
