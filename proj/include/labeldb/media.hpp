#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "labeldb/geometry.hpp"

namespace labeldb::media {

namespace fs = std::filesystem;

/// Row-major 8-bit pixels. Color buffers are RGB; masks carry one label per pixel.
struct PixelBuffer {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<uint8_t> data;

    PixelBuffer() = default;
    PixelBuffer(int w, int h, int c) : width(w), height(h), channels(c), data(size_t(w) * h * c, 0) {}

    [[nodiscard]] uint8_t& at(int x, int y, int c = 0) { return data[(size_t(y) * width + x) * channels + c]; }
    [[nodiscard]] uint8_t at(int x, int y, int c = 0) const { return data[(size_t(y) * width + x) * channels + c]; }

    friend bool operator==(const PixelBuffer&, const PixelBuffer&) = default;
};

struct ImageSize {
    int width = 0;
    int height = 0;
};

enum class EdgePolicy { distort, constant, original };

std::optional<EdgePolicy> parse_edge_policy(std::string_view text);

/// Reads only the header of a PNG or JPEG file.
ImageSize probe_size(const fs::path& path);

/// Decodes PNG or JPEG into a 3-channel buffer. Grayscale is replicated, alpha dropped.
PixelBuffer decode_file(const fs::path& path);

PixelBuffer read_image(const fs::path& rootdir, std::string_view imagefile);

/// Single-channel label map. Palettized PNGs yield their palette indices.
PixelBuffer read_mask(const fs::path& rootdir, std::string_view maskfile);

void write_png(const fs::path& path, const PixelBuffer& buf);
void write_jpeg(const fs::path& path, const PixelBuffer& buf, int quality = 90);
/// PNG or JPEG depending on the extension.
void write_image(const fs::path& path, const PixelBuffer& buf, int quality = 90);

std::vector<uint8_t> encode_png(const PixelBuffer& buf);

/// Bilinear resampling with pixel centers at half-integer coordinates and edge clamping.
PixelBuffer resize_bilinear(const PixelBuffer& src, int width, int height);

/// Integer pixel region a real-valued box covers: floor origin, rounded extent.
struct PixelRect {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;
};
PixelRect to_pixel_grid(const Box& box);

/// Region of the output that holds image content, in output coordinates.
struct CropResult {
    PixelBuffer pixels;
    Box content;
    /// Maps a source-image point into output coordinates.
    double scale_x = 1;
    double scale_y = 1;
    double offset_x = 0;
    double offset_y = 0;
    PixelRect source;

    [[nodiscard]] double map_x(double x) const { return (x - source.x) * scale_x + offset_x; }
    [[nodiscard]] double map_y(double y) const { return (y - source.y) * scale_y + offset_y; }
};

/// Cuts `box` out of `src`, zero-padding parts outside the buffer, then applies the edge policy.
/// The target size is ignored for EdgePolicy::original.
CropResult crop_and_resize(const PixelBuffer& src, const Box& box, int target_width, int target_height,
                           EdgePolicy policy);

/// Fixed color for each label value, label 0 black.
std::array<uint8_t, 3> label_color(int label);
PixelBuffer colorize_mask(const PixelBuffer& mask);

}  // namespace labeldb::media
