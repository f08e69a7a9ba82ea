#include "labeldb/serve.hpp"

#include "labeldb/error.hpp"
#include "labeldb/info.hpp"
#include "labeldb/media.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "httplib.h"
#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <shared_mutex>
#include <thread>

namespace labeldb::serve {

using nlohmann::json;

namespace {

constexpr std::string_view kAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";
constexpr int kMaxPageSize = 1000;

struct HttpError : std::runtime_error {
    HttpError(int status, const std::string& message) : std::runtime_error(message), status(status) {}
    int status;
};

json object_json(const ObjectEntry& entry)
{
    const auto& o = entry.object;
    json j;
    j["objectid"] = o.objectid;
    j["imagefile"] = o.imagefile;
    j["name"] = o.name ? json(*o.name) : json(nullptr);
    j["score"] = o.score ? json(*o.score) : json(nullptr);
    j["box"] = o.box ? json::array({o.box->x, o.box->y, o.box->width, o.box->height}) : json(nullptr);
    json polygon = json::array();
    for (const auto& p : entry.polygon) {
        polygon.push_back({{"x", p.x}, {"y", p.y}, {"name", p.name ? json(*p.name) : json(nullptr)}});
    }
    j["polygon"] = polygon;
    json properties = json::object();
    for (const auto& p : entry.properties) {
        properties[p.key] = p.value;
    }
    j["properties"] = properties;
    j["matches"] = entry.matches;
    j["match"] = entry.matches.empty() ? json(nullptr) : json(entry.matches.front());
    return j;
}

void send_json(httplib::Response& res, const json& body, int status = 200)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

std::string content_type_for(const fs::path& path)
{
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    if (ext == ".png") {
        return "image/png";
    }
    if (ext == ".jpg" || ext == ".jpeg") {
        return "image/jpeg";
    }
    return "application/octet-stream";
}

int64_t parse_int(const std::string& text, const char* what)
{
    try {
        size_t used = 0;
        long long value = std::stoll(text, &used);
        if (used == text.size()) {
            return value;
        }
    } catch (const std::exception&) {
    }
    throw HttpError(400, fmt::format("{} must be an integer, got '{}'", what, text));
}

}  // namespace

std::string encode_image_id(std::string_view imagefile)
{
    std::string out;
    out.reserve((imagefile.size() * 4 + 2) / 3);
    uint32_t buffer = 0;
    int bits = 0;
    for (unsigned char c : imagefile) {
        buffer = (buffer << 8) | c;
        bits += 8;
        while (bits >= 6) {
            bits -= 6;
            out.push_back(kAlphabet[(buffer >> bits) & 0x3F]);
        }
    }
    if (bits > 0) {
        out.push_back(kAlphabet[(buffer << (6 - bits)) & 0x3F]);
    }
    return out;
}

std::optional<std::string> decode_image_id(std::string_view id)
{
    std::string out;
    uint32_t buffer = 0;
    int bits = 0;
    for (char c : id) {
        auto pos = kAlphabet.find(c);
        if (pos == std::string_view::npos) {
            return std::nullopt;
        }
        buffer = (buffer << 6) | uint32_t(pos);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(char((buffer >> bits) & 0xFF));
        }
    }
    // Leftover bits must be zero padding from the encoder.
    if (bits >= 6 || (buffer & ((1u << bits) - 1)) != 0) {
        return std::nullopt;
    }
    return out;
}

struct Server::Impl {
    Session& session;
    Options options;
    httplib::Server http;
    std::shared_mutex mutex;
    std::thread thread;
    int port = -1;

    Impl(Session& s, Options o) : session(s), options(std::move(o)) { routes(); }

    ImageRecord image_for(const std::string& id)
    {
        auto imagefile = decode_image_id(id);
        if (!imagefile) {
            throw HttpError(404, fmt::format("malformed image id '{}'", id));
        }
        auto image = session.image(*imagefile);
        if (!image) {
            throw HttpError(404, fmt::format("unknown imagefile '{}'", *imagefile));
        }
        return *image;
    }

    void require_writable()
    {
        if (session.is_read_only()) {
            throw HttpError(403, "read-only session");
        }
    }

    // Runs the handler and turns exceptions into JSON error responses.
    template <typename Fn>
    httplib::Server::Handler wrap(Fn fn)
    {
        return [fn](const httplib::Request& req, httplib::Response& res) {
            try {
                fn(req, res);
            } catch (const HttpError& e) {
                send_json(res, {{"error", e.what()}}, e.status);
            } catch (const QueryError& e) {
                send_json(res, {{"error", e.what()}}, 400);
            } catch (const json::exception& e) {
                send_json(res, {{"error", fmt::format("malformed request body: {}", e.what())}}, 400);
            } catch (const std::exception& e) {
                send_json(res, {{"error", e.what()}}, 500);
            }
        };
    }

    void routes()
    {
        http.Get("/api/info", wrap([this](const httplib::Request&, httplib::Response& res) {
                     std::shared_lock lock(mutex);
                     send_json(res, info::to_json(info::summarize(session)));
                 }));

        http.Get("/api/images", wrap([this](const httplib::Request& req, httplib::Response& res) {
                     list_images(req, res);
                 }));

        http.Get(R"(/api/images/([A-Za-z0-9_-]+)/bytes)",
                 wrap([this](const httplib::Request& req, httplib::Response& res) {
                     fs::path path;
                     {
                         std::shared_lock lock(mutex);
                         path = session.resolve(image_for(req.matches[1]).imagefile);
                     }
                     std::ifstream in(path, std::ios::binary);
                     if (!in) {
                         throw HttpError(404, fmt::format("cannot read image file '{}'", path.string()));
                     }
                     std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
                     res.set_content(bytes, content_type_for(path));
                 }));

        http.Get(R"(/api/images/([A-Za-z0-9_-]+)/mask)",
                 wrap([this](const httplib::Request& req, httplib::Response& res) {
                     std::string maskfile;
                     fs::path root;
                     {
                         std::shared_lock lock(mutex);
                         auto image = image_for(req.matches[1]);
                         if (!image.maskfile) {
                             throw HttpError(404, fmt::format("image '{}' has no mask", image.imagefile));
                         }
                         maskfile = *image.maskfile;
                         root = session.rootdir();
                     }
                     auto mask = media::read_mask(root, maskfile);
                     auto png = media::encode_png(media::colorize_mask(mask));
                     res.set_content(std::string(png.begin(), png.end()), "image/png");
                 }));

        http.Get(R"(/api/images/([A-Za-z0-9_-]+)/objects)",
                 wrap([this](const httplib::Request& req, httplib::Response& res) {
                     std::shared_lock lock(mutex);
                     auto image = image_for(req.matches[1]);
                     auto entries = session.objects(fmt::format("imagefile = '{}'", escape(image.imagefile)));
                     json out = json::array();
                     for (const auto& entry : entries) {
                         out.push_back(object_json(entry));
                     }
                     send_json(res, out);
                 }));

        http.Get(R"(/api/objects/(-?\d+)/crop)", wrap([this](const httplib::Request& req, httplib::Response& res) {
                     const int64_t objectid = parse_int(req.matches[1], "objectid");
                     ObjectEntry entry;
                     fs::path root;
                     {
                         std::shared_lock lock(mutex);
                         auto found = session.object(objectid);
                         if (!found) {
                             throw HttpError(404, fmt::format("unknown objectid {}", objectid));
                         }
                         entry = *found;
                         root = session.rootdir();
                     }
                     if (!entry.object.box) {
                         throw HttpError(400, fmt::format("object {} has no bounding box", objectid));
                     }
                     auto image = media::read_image(root, entry.object.imagefile);
                     auto crop = media::crop_and_resize(image, *entry.object.box, 0, 0, media::EdgePolicy::original);
                     auto png = media::encode_png(crop.pixels);
                     res.set_content(std::string(png.begin(), png.end()), "image/png");
                 }));

        http.Patch(R"(/api/objects/(-?\d+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
                       const int64_t objectid = parse_int(req.matches[1], "objectid");
                       auto body = json::parse(req.body);
                       std::unique_lock lock(mutex);
                       require_writable();
                       auto entry = session.object(objectid);
                       if (!entry) {
                           throw HttpError(404, fmt::format("unknown objectid {}", objectid));
                       }
                       if (!body.is_object() || !body.contains("name")) {
                           throw HttpError(400, "body must be an object with a \"name\" field");
                       }
                       const auto& name = body["name"];
                       if (name.is_null()) {
                           entry->object.name.reset();
                       } else if (name.is_string()) {
                           entry->object.name = name.get<std::string>();
                       } else {
                           throw HttpError(400, "\"name\" must be a string or null");
                       }
                       session.update_object(entry->object);
                       send_json(res, object_json(*session.object(objectid)));
                   }));

        http.Post("/api/matches", wrap([this](const httplib::Request& req, httplib::Response& res) {
                      auto body = json::parse(req.body);
                      if (!body.is_object() || !body.contains("objectids") || !body["objectids"].is_array()) {
                          throw HttpError(400, "body must be an object with an \"objectids\" array");
                      }
                      std::set<int64_t> ids;
                      for (const auto& id : body["objectids"]) {
                          if (!id.is_number_integer()) {
                              throw HttpError(400, "objectids must be integers");
                          }
                          ids.insert(id.get<int64_t>());
                      }
                      if (ids.size() < 2) {
                          throw HttpError(400, "a match needs at least two distinct objectids");
                      }
                      std::unique_lock lock(mutex);
                      require_writable();
                      for (int64_t id : ids) {
                          if (!session.object(id)) {
                              throw HttpError(404, fmt::format("unknown objectid {}", id));
                          }
                      }
                      sqlite::Savepoint savepoint(session.writer());
                      const int64_t match = session.next_match_value();
                      for (int64_t id : ids) {
                          session.add_match(id, match);
                      }
                      savepoint.release();
                      send_json(res, {{"match", match}, {"objectids", session.match_members(match)}}, 201);
                  }));

        http.Delete(R"(/api/matches/(-?\d+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
                        const int64_t match = parse_int(req.matches[1], "match");
                        std::unique_lock lock(mutex);
                        require_writable();
                        if (session.match_members(match).empty()) {
                            throw HttpError(404, fmt::format("unknown match {}", match));
                        }
                        const int64_t deleted = session.delete_match(match);
                        send_json(res, {{"match", match}, {"deleted", deleted}});
                    }));

        http.Post("/api/commit", wrap([this](const httplib::Request&, httplib::Response& res) {
                      std::unique_lock lock(mutex);
                      require_writable();
                      const bool durable = session.write_path().has_value();
                      session.commit();
                      send_json(res, {{"committed", durable},
                                      {"path", durable ? json(session.write_path()->string()) : json(nullptr)}});
                  }));

        if (options.static_dir) {
            if (!http.set_mount_point("/", options.static_dir->string())) {
                throw Error(fmt::format("static directory '{}' does not exist", options.static_dir->string()));
            }
        }
    }

    static std::string escape(const std::string& text)
    {
        std::string out;
        for (char c : text) {
            out += c;
            if (c == '\'') {
                out += '\'';
            }
        }
        return out;
    }

    void list_images(const httplib::Request& req, httplib::Response& res)
    {
        auto param = [&](const char* key) -> std::optional<std::string> {
            if (!req.has_param(key)) {
                return std::nullopt;
            }
            return req.get_param_value(key);
        };
        const int64_t offset = param("offset") ? parse_int(*param("offset"), "offset") : 0;
        const int64_t limit = param("limit") ? parse_int(*param("limit"), "limit") : 100;
        if (offset < 0 || limit < 0 || limit > kMaxPageSize) {
            throw HttpError(400, fmt::format("offset must be >= 0 and limit in [0, {}]", kMaxPageSize));
        }
        const auto where = param("where");
        const auto shuffle = param("shuffle");
        const bool shuffled = shuffle && *shuffle != "0" && *shuffle != "false";
        const uint64_t seed = param("seed") ? uint64_t(parse_int(*param("seed"), "seed")) : 0;

        std::shared_lock lock(mutex);
        auto images = session.images(where && !where->empty() ? std::optional<std::string_view>(*where)
                                                              : std::nullopt);
        if (shuffled) {
            std::mt19937_64 rng(seed);
            std::shuffle(images.begin(), images.end(), rng);
        }
        std::map<std::string, int64_t> counts;
        {
            auto stmt = session.reader().prepare("SELECT imagefile, COUNT(*) FROM objects GROUP BY imagefile");
            while (stmt.step()) {
                counts[stmt.column_text(0)] = stmt.column_int(1);
            }
        }
        json page = json::array();
        for (int64_t i = offset; i < int64_t(images.size()) && i < offset + limit; ++i) {
            const auto& image = images[size_t(i)];
            auto count = counts.find(image.imagefile);
            page.push_back({
                {"id", encode_image_id(image.imagefile)},
                {"imagefile", image.imagefile},
                {"width", image.width ? json(*image.width) : json(nullptr)},
                {"height", image.height ? json(*image.height) : json(nullptr)},
                {"name", image.name ? json(*image.name) : json(nullptr)},
                {"score", image.score ? json(*image.score) : json(nullptr)},
                {"num_objects", count == counts.end() ? 0 : count->second},
                {"has_mask", image.maskfile.has_value()},
            });
        }
        send_json(res, {{"total", images.size()}, {"offset", offset}, {"limit", limit}, {"images", page}});
    }
};

Server::Server(Session& session, Options options) : impl_(std::make_unique<Impl>(session, std::move(options))) {}

Server::~Server()
{
    stop();
}

int Server::bind()
{
    if (impl_->options.port == 0) {
        impl_->port = impl_->http.bind_to_any_port(impl_->options.host);
    } else if (impl_->http.bind_to_port(impl_->options.host, impl_->options.port)) {
        impl_->port = impl_->options.port;
    } else {
        impl_->port = -1;
    }
    if (impl_->port < 0) {
        throw Error(fmt::format("cannot listen on {}:{}", impl_->options.host, impl_->options.port));
    }
    spdlog::info("serving on http://{}:{}/", impl_->options.host, impl_->port);
    return impl_->port;
}

void Server::listen()
{
    impl_->http.listen_after_bind();
}

int Server::start()
{
    const int port = bind();
    impl_->thread = std::thread([this] { listen(); });
    impl_->http.wait_until_ready();
    return port;
}

void Server::stop()
{
    impl_->http.stop();
    if (impl_->thread.joinable()) {
        impl_->thread.join();
    }
}

}  // namespace labeldb::serve
