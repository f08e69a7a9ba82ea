#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "labeldb/media.hpp"
#include "labeldb/store.hpp"

namespace support {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir()
    {
        std::string pattern = (fs::temp_directory_path() / "labeldb-test-XXXXXX").string();
        if (::mkdtemp(pattern.data()) == nullptr) {
            throw std::runtime_error("mkdtemp failed");
        }
        path_ = pattern;
    }
    ~TempDir()
    {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const fs::path& path() const { return path_; }
    [[nodiscard]] fs::path operator/(const fs::path& rel) const { return path_ / rel; }

private:
    fs::path path_;
};

inline std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

inline void write_file(const fs::path& path, const std::string& text)
{
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline size_t file_hash(const fs::path& path)
{
    return std::hash<std::string>{}(read_file(path));
}

/// Files under `dir` with their contents, for before/after comparisons.
inline std::vector<std::pair<std::string, std::string>> snapshot_dir(const fs::path& dir)
{
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file()) {
            out.emplace_back(entry.path().string(), read_file(entry.path()));
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// A w x h RGB image whose pixel (x, y) is (x, y, x + y) mod 256.
inline labeldb::media::PixelBuffer gradient(int w, int h)
{
    labeldb::media::PixelBuffer buf(w, h, 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            buf.at(x, y, 0) = uint8_t(x % 256);
            buf.at(x, y, 1) = uint8_t(y % 256);
            buf.at(x, y, 2) = uint8_t((x + y) % 256);
        }
    }
    return buf;
}

inline void write_png_image(const fs::path& path, int w, int h)
{
    fs::create_directories(path.parent_path());
    labeldb::media::write_png(path, gradient(w, h));
}

inline labeldb::ImageRecord image(std::string imagefile, int64_t w = 100, int64_t h = 100)
{
    labeldb::ImageRecord record;
    record.imagefile = std::move(imagefile);
    record.width = w;
    record.height = h;
    return record;
}

inline labeldb::ObjectRecord object(std::string imagefile, labeldb::Box box, std::string name = "car")
{
    labeldb::ObjectRecord record;
    record.imagefile = std::move(imagefile);
    record.box = box;
    record.name = std::move(name);
    return record;
}

inline std::vector<std::vector<std::string>> dump(labeldb::Session& session)
{
    return labeldb::dump_tables(session.reader());
}

}  // namespace support
