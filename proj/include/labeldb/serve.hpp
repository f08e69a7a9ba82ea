#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "labeldb/store.hpp"

namespace labeldb::serve {

namespace fs = std::filesystem;

struct Options {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    std::optional<fs::path> static_dir;
};

/// URL-safe id of an image: unpadded base64url of the imagefile bytes.
std::string encode_image_id(std::string_view imagefile);
std::optional<std::string> decode_image_id(std::string_view id);

/// JSON API over one session. Reads may run concurrently; mutations are exclusive.
class Server {
public:
    Server(Session& session, Options options);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds the listening socket and returns the bound port. Throws Error when the port is busy.
    int bind();
    /// Serves until stop() is called. bind() must have succeeded.
    void listen();
    /// bind() then listen() on a background thread; returns the bound port.
    int start();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace labeldb::serve
