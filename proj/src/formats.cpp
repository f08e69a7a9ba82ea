#include "labeldb/formats.hpp"

#include "labeldb/error.hpp"
#include "labeldb/media.hpp"

#include <boost/algorithm/string/trim.hpp>
#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace labeldb::formats {

namespace pt = boost::property_tree;

namespace {

double parse_number(std::string_view token)
{
    double value = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size()) {
        throw Error(fmt::format("not a number: '{}'", token));
    }
    return value;
}

std::string lowercase(std::string text)
{
    for (auto& c : text) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return text;
}

std::string trimmed(const std::string& text)
{
    return boost::algorithm::trim_copy(text);
}

std::optional<std::string> child_text(const pt::ptree& node, const std::string& path)
{
    auto child = node.get_optional<std::string>(path);
    if (!child) {
        return std::nullopt;
    }
    return trimmed(*child);
}

void note_skip(ImportReport& report, const fs::path& path, std::string reason)
{
    spdlog::warn("skipping {}: {}", path.string(), reason);
    report.skipped.push_back({path, std::move(reason)});
}

std::vector<fs::path> list_files_with_extension(const fs::path& dir, const std::set<std::string>& extensions)
{
    std::vector<fs::path> files;
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) {
        throw NotFoundError(fmt::format("directory not found: {}", dir.string()));
    }
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && extensions.count(lowercase(entry.path().extension().string()))) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

// Shared tail of the XML importers: image row plus objects, or a skip on conflict.
bool add_image_once(Session& session, ImportReport& report, const fs::path& source, const ImageRecord& image)
{
    if (session.image(image.imagefile)) {
        note_skip(report, source, fmt::format("image '{}' is already in the database", image.imagefile));
        return false;
    }
    session.add_image(image);
    ++report.images_added;
    return true;
}

}  // namespace

std::vector<KittiLabel> parse_kitti_labels(std::istream& in)
{
    std::vector<KittiLabel> labels;
    std::string line;
    int line_number = 0;
    std::vector<std::string> tokens;
    while (std::getline(in, line)) {
        ++line_number;
        tokens.clear();
        std::istringstream fields(line);
        for (std::string token; fields >> token;) {
            tokens.push_back(std::move(token));
        }
        if (tokens.empty()) {
            continue;
        }
        if (tokens.size() != 15 && tokens.size() != 16) {
            throw Error(fmt::format("line {}: expected 15 or 16 fields, got {}", line_number, tokens.size()));
        }
        KittiLabel label;
        label.type = tokens[0];
        try {
            for (size_t i = 1; i < tokens.size(); ++i) {
                parse_number(tokens[i]);
            }
        } catch (const Error& e) {
            throw Error(fmt::format("line {}: {}", line_number, e.what()));
        }
        label.left = parse_number(tokens[4]);
        label.top = parse_number(tokens[5]);
        label.right = parse_number(tokens[6]);
        label.bottom = parse_number(tokens[7]);
        label.properties = {tokens[1], tokens[2], tokens[3],  tokens[8],  tokens[9],
                            tokens[10], tokens[11], tokens[12], tokens[13], tokens[14]};
        if (tokens.size() == 16) {
            label.score = parse_number(tokens[15]);
        }
        labels.push_back(std::move(label));
    }
    return labels;
}

std::vector<KittiLabel> parse_kitti_label_file(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw NotFoundError(fmt::format("cannot open {}", path.string()));
    }
    return parse_kitti_labels(in);
}

std::string format_kitti_label(const KittiLabel& label)
{
    const auto& p = label.properties;
    std::string line = fmt::format("{} {} {} {} {} {} {} {} {} {} {} {} {} {} {}", label.type, p[0], p[1], p[2],
                                   label.left, label.top, label.right, label.bottom, p[3], p[4], p[5], p[6], p[7],
                                   p[8], p[9]);
    if (label.score) {
        line += fmt::format(" {}", *label.score);
    }
    return line;
}

std::vector<fs::path> list_image_files(const fs::path& dir)
{
    return list_files_with_extension(dir, {".png", ".jpg", ".jpeg"});
}

ImportReport import_kitti(Session& session, const fs::path& images_dir, const std::optional<fs::path>& detection_dir)
{
    ImportReport report;
    auto& conn = session.writer();
    sqlite::Savepoint savepoint(conn);
    for (const auto& image_path : list_image_files(images_dir)) {
        ++report.files_scanned;
        ImageRecord image;
        image.imagefile = session.relative_to_root(image_path);
        try {
            auto size = media::probe_size(image_path);
            image.width = size.width;
            image.height = size.height;
        } catch (const Error& e) {
            note_skip(report, image_path, e.what());
            continue;
        }

        std::vector<KittiLabel> labels;
        if (detection_dir) {
            fs::path label_path = *detection_dir / (image_path.stem().string() + ".txt");
            if (fs::exists(label_path)) {
                try {
                    labels = parse_kitti_label_file(label_path);
                } catch (const Error& e) {
                    note_skip(report, label_path, e.what());
                    continue;
                }
            }
        }
        if (!add_image_once(session, report, image_path, image)) {
            continue;
        }
        for (const auto& label : labels) {
            ObjectRecord object;
            object.imagefile = image.imagefile;
            object.name = label.type;
            object.box = Box{label.left, label.top, label.right - label.left, label.bottom - label.top};
            object.score = label.score;
            int64_t objectid = session.add_object(object);
            for (size_t i = 0; i < kKittiPropertyKeys.size(); ++i) {
                session.add_property(objectid, kKittiPropertyKeys[i], label.properties[i]);
            }
            ++report.objects_added;
        }
    }
    savepoint.release();
    return report;
}

ImportReport import_pascal_voc(Session& session, const fs::path& images_dir, const fs::path& annotations_dir)
{
    ImportReport report;
    auto& conn = session.writer();
    sqlite::Savepoint savepoint(conn);
    for (const auto& xml_path : list_files_with_extension(annotations_dir, {".xml"})) {
        ++report.files_scanned;
        pt::ptree tree;
        ImageRecord image;
        struct VocObject {
            std::optional<std::string> name;
            Box box;
            std::vector<std::pair<std::string, std::string>> properties;
        };
        std::vector<VocObject> objects;
        try {
            pt::read_xml(xml_path.string(), tree);
            const auto& root = tree.get_child("annotation");
            auto filename = child_text(root, "filename");
            if (!filename || filename->empty()) {
                throw Error("missing <filename>");
            }
            image.imagefile = session.relative_to_root(images_dir / *filename);
            if (root.get_child_optional("size")) {
                image.width = std::lround(parse_number(trimmed(root.get<std::string>("size.width"))));
                image.height = std::lround(parse_number(trimmed(root.get<std::string>("size.height"))));
            } else {
                auto size = media::probe_size(images_dir / *filename);
                image.width = size.width;
                image.height = size.height;
            }
            for (const auto& [tag, node] : root) {
                if (tag != "object") {
                    continue;
                }
                VocObject object;
                object.name = child_text(node, "name");
                const double xmin = parse_number(trimmed(node.get<std::string>("bndbox.xmin")));
                const double ymin = parse_number(trimmed(node.get<std::string>("bndbox.ymin")));
                const double xmax = parse_number(trimmed(node.get<std::string>("bndbox.xmax")));
                const double ymax = parse_number(trimmed(node.get<std::string>("bndbox.ymax")));
                object.box = Box{xmin, ymin, xmax - xmin, ymax - ymin};
                for (const char* key : {"difficult", "truncated", "occluded", "pose"}) {
                    if (auto value = child_text(node, key)) {
                        object.properties.emplace_back(key, *value);
                    }
                }
                objects.push_back(std::move(object));
            }
        } catch (const std::exception& e) {
            note_skip(report, xml_path, e.what());
            continue;
        }
        if (!add_image_once(session, report, xml_path, image)) {
            continue;
        }
        for (const auto& object : objects) {
            int64_t objectid = session.add_object({0, image.imagefile, object.box, object.name, std::nullopt});
            for (const auto& [key, value] : object.properties) {
                session.add_property(objectid, key, value);
            }
            ++report.objects_added;
        }
    }
    savepoint.release();
    return report;
}

ImportReport import_labelme(Session& session, const fs::path& images_dir, const fs::path& annotations_dir)
{
    ImportReport report;
    auto& conn = session.writer();
    sqlite::Savepoint savepoint(conn);
    for (const auto& xml_path : list_files_with_extension(annotations_dir, {".xml"})) {
        ++report.files_scanned;
        pt::ptree tree;
        ImageRecord image;
        struct Point {
            double x;
            double y;
        };
        struct LabelmeObject {
            std::optional<std::string> name;
            std::vector<std::vector<Point>> polygons;
            std::vector<std::pair<std::string, std::string>> properties;
        };
        std::vector<LabelmeObject> objects;
        try {
            pt::read_xml(xml_path.string(), tree);
            const auto& root = tree.get_child("annotation");
            auto filename = child_text(root, "filename");
            if (!filename || filename->empty()) {
                throw Error("missing <filename>");
            }
            fs::path image_path = images_dir / *filename;
            image.imagefile = session.relative_to_root(image_path);
            if (root.get_child_optional("imagesize.nrows") && root.get_child_optional("imagesize.ncols")) {
                image.height = std::lround(parse_number(trimmed(root.get<std::string>("imagesize.nrows"))));
                image.width = std::lround(parse_number(trimmed(root.get<std::string>("imagesize.ncols"))));
            } else if (fs::exists(image_path)) {
                auto size = media::probe_size(image_path);
                image.width = size.width;
                image.height = size.height;
            }
            for (const auto& [tag, node] : root) {
                if (tag != "object") {
                    continue;
                }
                if (child_text(node, "deleted").value_or("0") == "1") {
                    continue;
                }
                LabelmeObject object;
                object.name = child_text(node, "name");
                for (const auto& [ptag, polygon] : node) {
                    if (ptag != "polygon") {
                        continue;
                    }
                    std::vector<Point> points;
                    for (const auto& [pt_tag, pt_node] : polygon) {
                        if (pt_tag != "pt") {
                            continue;
                        }
                        points.push_back({parse_number(trimmed(pt_node.get<std::string>("x"))),
                                          parse_number(trimmed(pt_node.get<std::string>("y")))});
                    }
                    object.polygons.push_back(std::move(points));
                }
                for (const char* key : {"occluded", "attributes"}) {
                    if (auto value = child_text(node, key); value && !value->empty()) {
                        object.properties.emplace_back(key, *value);
                    }
                }
                objects.push_back(std::move(object));
            }
        } catch (const std::exception& e) {
            note_skip(report, xml_path, e.what());
            continue;
        }
        if (!add_image_once(session, report, xml_path, image)) {
            continue;
        }
        for (const auto& object : objects) {
            int64_t objectid = session.add_object({0, image.imagefile, std::nullopt, object.name, std::nullopt});
            const bool several = object.polygons.size() > 1;
            for (size_t i = 0; i < object.polygons.size(); ++i) {
                std::optional<std::string> polygon_name;
                if (several) {
                    polygon_name = std::to_string(i);
                }
                for (const auto& point : object.polygons[i]) {
                    session.add_polygon_point(objectid, point.x, point.y, polygon_name);
                }
            }
            for (const auto& [key, value] : object.properties) {
                session.add_property(objectid, key, value);
            }
            ++report.objects_added;
        }
    }
    savepoint.release();
    return report;
}

int64_t export_kitti(Session& session, const fs::path& detection_dir)
{
    auto objects = session.objects();
    for (const auto& entry : objects) {
        if (!entry.object.box) {
            throw Error(fmt::format("object {} has no bounding box; run polygonsToBoxes first", entry.object.objectid));
        }
    }
    fs::create_directories(detection_dir);

    std::map<std::string, std::vector<const ObjectEntry*>> by_image;
    for (const auto& entry : objects) {
        by_image[entry.object.imagefile].push_back(&entry);
    }
    int64_t written = 0;
    for (const auto& image : session.images()) {
        fs::path label_path = detection_dir / (fs::path(image.imagefile).stem().string() + ".txt");
        std::ofstream out(label_path);
        if (!out) {
            throw Error(fmt::format("cannot write {}", label_path.string()));
        }
        for (const auto* entry : by_image[image.imagefile]) {
            const auto& box = *entry->object.box;
            KittiLabel label;
            label.type = entry->object.name.value_or("DontCare");
            label.left = box.x;
            label.top = box.y;
            label.right = box.right();
            label.bottom = box.bottom();
            for (size_t i = 0; i < kKittiPropertyKeys.size(); ++i) {
                label.properties[i] = entry->property(kKittiPropertyKeys[i]).value_or(kKittiPropertyDefaults[i]);
            }
            label.score = entry->object.score;
            out << format_kitti_label(label) << '\n';
        }
        ++written;
    }
    return written;
}

std::string csv_field(std::string_view value)
{
    if (value.find_first_of(",\"\r\n") == std::string_view::npos) {
        return std::string(value);
    }
    std::string quoted = "\"";
    for (char c : value) {
        if (c == '"') {
            quoted += '"';
        }
        quoted += c;
    }
    quoted += '"';
    return quoted;
}

int64_t export_csv(Session& session, const fs::path& out_path)
{
    std::ofstream out(out_path, std::ios::binary);
    if (!out) {
        throw Error(fmt::format("cannot write {}", out_path.string()));
    }
    auto optional_number = [](const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string(); };
    out << "imagefile,objectid,name,x,y,width,height,score\r\n";
    int64_t rows = 0;
    for (const auto& entry : session.objects()) {
        const auto& o = entry.object;
        std::optional<double> x, y, w, h;
        if (o.box) {
            x = o.box->x;
            y = o.box->y;
            w = o.box->width;
            h = o.box->height;
        }
        out << csv_field(o.imagefile) << ',' << o.objectid << ',' << csv_field(o.name.value_or("")) << ','
            << optional_number(x) << ',' << optional_number(y) << ',' << optional_number(w) << ','
            << optional_number(h) << ',' << optional_number(o.score) << "\r\n";
        ++rows;
    }
    if (!out) {
        throw Error(fmt::format("failed writing {}", out_path.string()));
    }
    return rows;
}

}  // namespace labeldb::formats
