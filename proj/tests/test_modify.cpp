#include "doctest.h"
#include "support.hpp"

#include "labeldb/error.hpp"
#include "labeldb/modify.hpp"

#include <map>
#include <set>

using namespace labeldb;
using support::TempDir;

namespace {

Session boxes_db(std::mt19937_64& rng, int n)
{
    auto s = Session::in_memory();
    s.add_image(support::image("a.png", 200, 100));
    std::uniform_real_distribution<double> pos(-50, 250);
    std::uniform_real_distribution<double> size(0, 80);
    for (int i = 0; i < n; ++i) {
        s.add_object(support::object("a.png", {pos(rng), pos(rng), size(rng), size(rng)}));
    }
    ObjectRecord boxless;
    boxless.imagefile = "a.png";
    s.add_object(boxless);
    return s;
}

std::map<int64_t, std::optional<Box>> boxes_of(Session& s)
{
    std::map<int64_t, std::optional<Box>> out;
    for (const auto& e : s.objects()) {
        out[e.object.objectid] = e.object.box;
    }
    return out;
}

void commit_db(Session& s, const fs::path& path)
{
    auto out = Session::open(std::nullopt, path);
    auto rows = s.objects();
    for (const auto& img : s.images()) {
        out.add_image(img);
    }
    for (const auto& e : rows) {
        int64_t id = out.add_object(e.object);
        for (const auto& p : e.properties) {
            out.add_property(id, p.key, p.value);
        }
        for (const auto& p : e.polygon) {
            out.add_polygon_point(id, p.x, p.y, p.name);
        }
        for (int64_t m : e.matches) {
            out.add_match(id, m);
        }
    }
    out.commit();
}

Session sample_db()
{
    auto s = Session::in_memory();
    s.add_image(support::image("a.png"));
    s.add_image(support::image("b.png", 50, 60));
    int64_t o1 = s.add_object(support::object("a.png", {1, 2, 3, 4}));
    int64_t o2 = s.add_object(support::object("b.png", {5, 6, 7, 8}, "bus"));
    int64_t o3 = s.add_object(support::object("b.png", {0, 0, 1, 1}, "bus"));
    s.add_property(o1, "color", "red");
    s.add_polygon_point(o2, 5, 6, std::nullopt);
    s.add_polygon_point(o2, 12, 14, std::nullopt);
    s.add_match(o1, 1);
    s.add_match(o2, 1);
    s.add_match(o3, 2);
    return s;
}

}  // namespace

TEST_CASE("expandBoxes worked example and identity")
{
    auto s = Session::in_memory();
    s.add_image(support::image("a.png"));
    int64_t id = s.add_object(support::object("a.png", {10, 10, 20, 40}));
    modify::expand_boxes(s, 0);
    CHECK(s.object(id)->object.box == Box{10, 10, 20, 40});
    CHECK(modify::expand_boxes(s, 0.2) == 1);
    const Box b = *s.object(id)->object.box;
    CHECK(b.x == doctest::Approx(6));
    CHECK(b.y == doctest::Approx(2));
    CHECK(b.width == doctest::Approx(28));
    CHECK(b.height == doctest::Approx(56));
}

TEST_CASE("expandBoxes keeps centers and composes multiplicatively")
{
    std::mt19937_64 rng(1);
    for (double p : {-0.2, 0.0, 0.2, 1.0}) {
        for (double q : {-0.3, 0.1, 0.5}) {
            auto s = boxes_db(rng, 30);
            auto before = boxes_of(s);
            modify::expand_boxes(s, p);
            auto mid = boxes_of(s);
            modify::expand_boxes(s, q);
            auto after = boxes_of(s);
            for (const auto& [id, box] : before) {
                if (!box) {
                    CHECK_FALSE(after[id]);
                    continue;
                }
                const Box& m = *mid[id];
                CHECK(m.x + m.width / 2 == doctest::Approx(box->x + box->width / 2).epsilon(1e-12));
                CHECK(m.y + m.height / 2 == doctest::Approx(box->y + box->height / 2).epsilon(1e-12));
                const double k = (1 + 2 * p) * (1 + 2 * q);
                const Box& a = *after[id];
                CHECK(a.width == doctest::Approx(box->width * k).epsilon(1e-12));
                CHECK(a.height == doctest::Approx(box->height * k).epsilon(1e-12));
                CHECK(a.x == doctest::Approx(box->x - box->width * (k - 1) / 2).epsilon(1e-12));
                CHECK(a.y == doctest::Approx(box->y - box->height * (k - 1) / 2).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("clampBoxesToImage intersects boxes with the frame")
{
    auto s = Session::in_memory();
    s.add_image(support::image("a.png", 100, 50));
    int64_t inside = s.add_object(support::object("a.png", {10, 10, 20, 20}));
    int64_t over = s.add_object(support::object("a.png", {-10, 40, 30, 30}));
    int64_t outside = s.add_object(support::object("a.png", {200, 200, 5, 5}));
    CHECK(modify::clamp_boxes_to_image(s) == 2);
    CHECK(s.object(inside)->object.box == Box{10, 10, 20, 20});
    CHECK(s.object(over)->object.box == Box{0, 40, 20, 10});
    CHECK(s.object(outside)->object.box->area() == 0);
}

TEST_CASE("polygonsToBoxes examples")
{
    auto s = Session::in_memory();
    s.add_image(support::image("a.png"));
    ObjectRecord bare;
    bare.imagefile = "a.png";
    int64_t tri = s.add_object(bare);
    s.add_polygon_point(tri, 0, 0, std::nullopt);
    s.add_polygon_point(tri, 10, 0, std::nullopt);
    s.add_polygon_point(tri, 5, 5, std::nullopt);
    int64_t dot = s.add_object(bare);
    s.add_polygon_point(dot, 7, 3, std::nullopt);
    int64_t untouched = s.add_object(support::object("a.png", {1, 1, 1, 1}));
    int64_t none = s.add_object(bare);

    CHECK(modify::polygons_to_boxes(s) == 2);
    CHECK(s.object(tri)->object.box == Box{0, 0, 10, 5});
    CHECK(s.object(tri)->polygon.size() == 3);
    CHECK(s.object(dot)->object.box == Box{7, 3, 0, 0});
    CHECK(s.object(untouched)->object.box == Box{1, 1, 1, 1});
    CHECK_FALSE(s.object(none)->object.box);
}

TEST_CASE("polygonsToBoxes yields the minimal containing box")
{
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> coord(-100, 100);
    std::uniform_int_distribution<int> count(1, 12);
    auto s = Session::in_memory();
    s.add_image(support::image("a.png"));
    std::map<int64_t, std::vector<std::pair<double, double>>> points;
    for (int i = 0; i < 100; ++i) {
        ObjectRecord o;
        o.imagefile = "a.png";
        int64_t id = s.add_object(o);
        int n = count(rng);
        for (int k = 0; k < n; ++k) {
            double x = coord(rng), y = coord(rng);
            s.add_polygon_point(id, x, y, k % 2 ? std::optional<std::string>("1") : std::nullopt);
            points[id].emplace_back(x, y);
        }
    }
    modify::polygons_to_boxes(s);
    for (const auto& [id, pts] : points) {
        const Box b = *s.object(id)->object.box;
        bool left = false, right = false, top = false, bottom = false;
        for (auto [x, y] : pts) {
            CHECK(x >= b.x);
            CHECK(y >= b.y);
            CHECK(x <= b.right() + 1e-9);
            CHECK(y <= b.bottom() + 1e-9);
            left |= x == b.x;
            top |= y == b.y;
            right |= std::abs(x - b.right()) < 1e-9;
            bottom |= std::abs(y - b.bottom()) < 1e-9;
        }
        CHECK((left && right && top && bottom));
    }
}

TEST_CASE("addDatabase with an empty db changes nothing")
{
    TempDir dir;
    auto empty = Session::in_memory();
    commit_db(empty, dir / "empty.db");
    auto s = sample_db();
    auto before = support::dump(s);
    modify::add_database(s, dir / "empty.db");
    CHECK(support::dump(s) == before);
}

TEST_CASE("addDatabase with a copy of itself doubles objects and keeps groups apart")
{
    TempDir dir;
    auto s = sample_db();
    commit_db(s, dir / "copy.db");
    const auto original_ids = s.objects();
    std::set<int64_t> original_groups;
    for (const auto& e : original_ids) {
        original_groups.insert(e.matches.begin(), e.matches.end());
    }

    auto report = modify::add_database(s, dir / "copy.db");
    CHECK(report.objects_added == 3);
    CHECK(report.images_added == 0);
    CHECK(s.count_objects() == 6);
    CHECK(s.count_images() == 2);
    CHECK(s.validate_integrity().empty());

    std::set<int64_t> ids;
    std::set<int64_t> new_groups;
    for (const auto& e : s.objects()) {
        ids.insert(e.object.objectid);
        if (e.object.objectid > original_ids.back().object.objectid) {
            new_groups.insert(e.matches.begin(), e.matches.end());
            if (e.object.name == "car") {
                CHECK(e.property("color") == "red");
            }
        }
    }
    CHECK(ids.size() == 6);
    CHECK(new_groups.size() == original_groups.size());
    for (int64_t g : new_groups) {
        CHECK(original_groups.count(g) == 0);
    }
    auto polygon_owners = s.objects("name = 'bus' AND width = 7");
    REQUIRE(polygon_owners.size() == 2);
    CHECK(polygon_owners[1].polygon.size() == 2);
}

TEST_CASE("addDatabase rejects conflicting image dimensions")
{
    TempDir dir;
    auto other = Session::in_memory();
    other.add_image(support::image("b.png", 51, 60));
    other.add_object(support::object("b.png", {1, 1, 1, 1}));
    commit_db(other, dir / "other.db");
    auto s = sample_db();
    auto before = support::dump(s);
    try {
        modify::add_database(s, dir / "other.db");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("b.png") != std::string::npos);
    }
    CHECK(support::dump(s) == before);
}

TEST_CASE("addDatabase reports a missing file")
{
    auto s = sample_db();
    CHECK_THROWS_AS(modify::add_database(s, "/nonexistent/x.db"), Error);
}

TEST_CASE("split_items partitions with leftovers to the first split")
{
    std::vector<std::string> items;
    for (int i = 0; i < 10; ++i) {
        items.push_back("i" + std::to_string(i));
    }
    auto splits = modify::split_items(items, {0.7, 0.3}, 42);
    REQUIRE(splits.size() == 2);
    CHECK(splits[0].size() == 7);
    CHECK(splits[1].size() == 3);
    std::set<std::string> all(splits[0].begin(), splits[0].end());
    all.insert(splits[1].begin(), splits[1].end());
    CHECK(all == std::set<std::string>(items.begin(), items.end()));
    CHECK(modify::split_items(items, {0.7, 0.3}, 42) == splits);

    auto thirds = modify::split_items(items, {0.34, 0.33, 0.33}, 1);
    CHECK(thirds[0].size() == 4);
    CHECK(thirds[1].size() == 3);
    CHECK(thirds[2].size() == 3);

    auto part = modify::split_items(items, {0.5, 0.25}, 1);
    CHECK(part[0].size() == 5);
    CHECK(part[1].size() == 2);

    CHECK(modify::split_items(items, {1.0}, 0)[0].size() == 10);
    CHECK_THROWS_AS(modify::split_items(items, {}, 0), Error);
    CHECK_THROWS_AS(modify::split_items(items, {0.0}, 0), Error);
    CHECK_THROWS_AS(modify::split_items(items, {1.5}, 0), Error);
    try {
        modify::split_items(items, {0.7, 0.7}, 0);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("fractions exceed 1") != std::string::npos);
    }
}

TEST_CASE("split_items is a partition for many sizes and seeds")
{
    for (int n : {0, 1, 2, 7, 33, 100}) {
        std::vector<std::string> items;
        for (int i = 0; i < n; ++i) {
            items.push_back(std::to_string(i));
        }
        for (uint64_t seed : {0u, 5u, 99u}) {
            for (const auto& fractions : std::vector<std::vector<double>>{{0.6, 0.2, 0.2}, {0.5, 0.5}, {0.1}}) {
                auto splits = modify::split_items(items, fractions, seed);
                std::multiset<std::string> seen;
                for (size_t i = 0; i < splits.size(); ++i) {
                    if (i > 0) {
                        CHECK(splits[i].size() == size_t(std::floor(fractions[i] * n + 1e-9)));
                    }
                    seen.insert(splits[i].begin(), splits[i].end());
                }
                for (const auto& item : seen) {
                    CHECK(seen.count(item) == 1);
                }
                double sum = 0;
                for (double f : fractions) {
                    sum += f;
                }
                CHECK(seen.size() == size_t(std::floor(sum * n + 1e-9)));
            }
        }
    }
}

TEST_CASE("splitDatabase writes disjoint dbs with dependent rows")
{
    TempDir dir;
    auto s = Session::in_memory();
    for (int i = 0; i < 10; ++i) {
        std::string f = std::to_string(i) + ".png";
        s.add_image(support::image(f));
        int64_t id = s.add_object(support::object(f, {1, 1, 2, 2}));
        s.add_property(id, "i", std::to_string(i));
        s.add_polygon_point(id, 1, 1, std::nullopt);
        s.add_match(id, i % 3);
    }
    auto counts = modify::split_database(s, {0.7, 0.3}, {dir / "train.db", dir / "test.db"}, 3);
    CHECK(counts == std::vector<int64_t>{7, 3});

    std::set<std::string> seen;
    for (const char* name : {"train.db", "test.db"}) {
        auto part = Session::open(dir / name, std::nullopt);
        CHECK(part.validate_integrity().empty());
        for (const auto& img : part.images()) {
            CHECK(seen.insert(img.imagefile).second);
        }
        for (const auto& e : part.objects()) {
            auto original = s.object(e.object.objectid);
            REQUIRE(original);
            CHECK(original->object == e.object);
            CHECK(e.properties.size() == 1);
            CHECK(e.polygon.size() == 1);
            CHECK(e.matches == original->matches);
        }
    }
    CHECK(seen.size() == 10);

    CHECK_THROWS_AS(modify::split_database(s, {0.5}, {dir / "a.db", dir / "b.db"}, 0), Error);
    CHECK_THROWS_AS(modify::split_database(s, {0.7, 0.7}, {dir / "a.db", dir / "b.db"}, 0), Error);
}

TEST_CASE("splitDatabase with a single full fraction copies everything")
{
    TempDir dir;
    auto s = sample_db();
    modify::split_database(s, {1.0}, {dir / "all.db"}, 0);
    auto copy = Session::open(dir / "all.db", std::nullopt);
    CHECK(support::dump(copy) == support::dump(s));
}

TEST_CASE("cropObjects distort without rescale reproduces the source region")
{
    TempDir dir;
    support::write_png_image(dir / "src.png", 128, 128);
    auto s = Session::in_memory();
    s.set_rootdir(dir.path());
    s.add_image(support::image("src.png", 128, 128));
    int64_t id = s.add_object(support::object("src.png", {16, 32, 64, 64}));
    s.add_property(id, "k", "v");

    modify::CropOptions options;
    options.target_width = 64;
    options.target_height = 64;
    options.image_pictures_dir = dir / "crops";
    options.jpeg_quality = 100;
    auto report = modify::crop_objects(s, options);
    CHECK(report.written == 1);
    auto crop = media::decode_file(dir / "crops" / (std::to_string(id) + ".jpg"));
    REQUIRE(crop.width == 64);
    REQUIRE(crop.height == 64);
    auto source = support::gradient(128, 128);
    int worst = 0;
    for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
            for (int c = 0; c < 3; ++c) {
                worst = std::max(worst, std::abs(int(crop.at(x, y, c)) - int(source.at(x + 16, y + 32, c))));
            }
        }
    }
    // JPEG at full quality still quantizes slightly.
    CHECK(worst <= 8);

    auto entry = s.object(id);
    REQUIRE(entry);
    CHECK(entry->object.imagefile == "crops/" + std::to_string(id) + ".jpg");
    CHECK(entry->object.box == Box{0, 0, 64, 64});
    CHECK(entry->property("k") == "v");
    CHECK(s.count_images() == 1);
    CHECK(s.validate_integrity().empty());
}

TEST_CASE("cropObjects distort stretches content and polygons")
{
    TempDir dir;
    support::write_png_image(dir / "src.png", 128, 128);
    auto s = Session::in_memory();
    s.set_rootdir(dir.path());
    s.add_image(support::image("src.png", 128, 128));
    int64_t id = s.add_object(support::object("src.png", {16, 32, 32, 64}));
    s.add_polygon_point(id, 20, 40, std::nullopt);
    s.add_polygon_point(id, 40, 90, std::nullopt);
    int64_t other = s.add_object(support::object("src.png", {0, 0, 10, 10}));
    s.add_match(id, 1);
    s.add_match(other, 1);

    modify::CropOptions options;
    options.target_width = 64;
    options.target_height = 64;
    options.image_pictures_dir = dir / "crops";
    modify::crop_objects(s, options);

    auto entry = s.object(id);
    REQUIRE(entry);
    CHECK(entry->image.width == 64);
    CHECK(entry->image.height == 64);
    REQUIRE(entry->polygon.size() == 2);
    CHECK(entry->polygon[0].x == doctest::Approx((20 - 16) * 2.0));
    CHECK(entry->polygon[0].y == doctest::Approx(40 - 32));
    CHECK(entry->polygon[1].x == doctest::Approx((40 - 16) * 2.0));
    CHECK(entry->polygon[1].y == doctest::Approx(90 - 32));
    CHECK(entry->matches == std::vector<int64_t>{1});
    CHECK(s.match_members(1).size() == 2);
    CHECK(s.count_images() == 2);

    auto crop = media::decode_file(dir / "crops" / (std::to_string(id) + ".jpg"));
    // Red channel encodes source x; a 2x stretch halves its slope.
    CHECK(std::abs(int(crop.at(62, 32, 0)) - int(crop.at(2, 32, 0)) - 30) <= 4);
}

TEST_CASE("cropObjects constant and original policies")
{
    TempDir dir;
    support::write_png_image(dir / "src.png", 128, 128);
    auto s = Session::in_memory();
    s.set_rootdir(dir.path());
    s.add_image(support::image("src.png", 128, 128));
    int64_t id = s.add_object(support::object("src.png", {16, 32, 32, 64}));

    modify::CropOptions options;
    options.target_width = 48;
    options.target_height = 48;
    options.edges = media::EdgePolicy::constant;
    options.image_pictures_dir = dir / "crops";
    modify::crop_objects(s, options);
    auto entry = *s.object(id);
    CHECK(entry.image.width == 48);
    CHECK(entry.image.height == 48);
    CHECK(entry.object.box == Box{12, 0, 24, 48});

    auto s2 = Session::in_memory();
    s2.set_rootdir(dir.path());
    s2.add_image(support::image("src.png", 128, 128));
    id = s2.add_object(support::object("src.png", {16, 32, 30, 20}));
    options.edges = media::EdgePolicy::original;
    options.image_pictures_dir = dir / "orig";
    modify::crop_objects(s2, options);
    entry = *s2.object(id);
    CHECK(entry.image.width == 30);
    CHECK(entry.image.height == 20);
    CHECK(entry.object.box == Box{0, 0, 30, 20});
}

TEST_CASE("cropObjects skips unusable objects and drops them")
{
    TempDir dir;
    support::write_png_image(dir / "src.png", 64, 64);
    auto s = Session::in_memory();
    s.set_rootdir(dir.path());
    s.add_image(support::image("src.png", 64, 64));
    s.add_image(support::image("missing.png", 64, 64));
    int64_t good = s.add_object(support::object("src.png", {0, 0, 10, 10}));
    s.add_object(support::object("src.png", {5, 5, 0, 10}));
    s.add_object(support::object("missing.png", {0, 0, 10, 10}));
    ObjectRecord boxless;
    boxless.imagefile = "src.png";
    s.add_object(boxless);

    modify::CropOptions options;
    options.target_width = 16;
    options.target_height = 16;
    options.image_pictures_dir = dir / "crops";
    auto report = modify::crop_objects(s, options);
    CHECK(report.written == 1);
    CHECK(report.skipped.size() == 3);
    CHECK(s.count_objects() == 1);
    CHECK(s.object(good));
    CHECK(s.count_images() == 1);
    CHECK(s.validate_integrity().empty());
}

TEST_CASE("cropObjects validates its options")
{
    TempDir dir;
    auto s = Session::in_memory();
    modify::CropOptions options;
    options.image_pictures_dir = dir / "crops";
    CHECK_THROWS_AS(modify::crop_objects(s, options), Error);
    options.target_width = 8;
    options.target_height = 8;
    options.jpeg_quality = 0;
    CHECK_THROWS_AS(modify::crop_objects(s, options), Error);
}

TEST_CASE("modify operations never touch images on disk")
{
    TempDir dir;
    support::write_png_image(dir / "img" / "src.png", 64, 64);
    auto before = support::snapshot_dir(dir / "img");
    auto s = Session::in_memory();
    s.set_rootdir(dir.path());
    s.add_image(support::image("img/src.png", 64, 64));
    s.add_object(support::object("img/src.png", {4, 4, 20, 20}));
    modify::expand_boxes(s, 0.2);
    modify::clamp_boxes_to_image(s);
    modify::CropOptions options;
    options.target_width = 16;
    options.target_height = 16;
    options.image_pictures_dir = dir / "crops";
    modify::crop_objects(s, options);
    CHECK(support::snapshot_dir(dir / "img") == before);
}
