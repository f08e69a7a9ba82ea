#include "labeldb/media.hpp"

#include "labeldb/error.hpp"

#include <fmt/format.h>
#include <jpeglib.h>
#include <png.h>

#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

namespace labeldb::media {

namespace {

enum class FileKind { png, jpeg, unknown };

FileKind sniff(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw NotFoundError(fmt::format("image not found: {}", path.string()));
    }
    std::array<unsigned char, 8> magic{};
    in.read(reinterpret_cast<char*>(magic.data()), magic.size());
    if (in.gcount() >= 8 && png_sig_cmp(magic.data(), 0, 8) == 0) {
        return FileKind::png;
    }
    if (in.gcount() >= 3 && magic[0] == 0xFF && magic[1] == 0xD8 && magic[2] == 0xFF) {
        return FileKind::jpeg;
    }
    return FileKind::unknown;
}

struct FileCloser {
    void operator()(FILE* f) const
    {
        if (f) {
            std::fclose(f);
        }
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode)
{
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) {
        throw NotFoundError(fmt::format("cannot open {}", path.string()));
    }
    return f;
}

// ---- PNG (libpng reports errors by longjmp; nothing with a destructor lives past setjmp) ----

struct PngDecode {
    bool as_mask = false;
    PixelBuffer* out = nullptr;
    std::string error;
};

void png_error_handler(png_structp png, png_const_charp msg)
{
    auto* state = static_cast<PngDecode*>(png_get_error_ptr(png));
    if (state) {
        state->error = msg;
    }
    png_longjmp(png, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

bool decode_png(FILE* fp, PngDecode* state)
{
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, state, png_error_handler, png_warning_handler);
    if (!png) {
        state->error = "out of memory";
        return false;
    }
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        state->error = "out of memory";
        return false;
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        return false;
    }
    png_init_io(png, fp);
    png_read_info(png, info);

    const int color_type = png_get_color_type(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    if (state->as_mask) {
        if (color_type != PNG_COLOR_TYPE_PALETTE && color_type != PNG_COLOR_TYPE_GRAY) {
            state->error = fmt::format("mask must be single-channel, got {} channels", png_get_channels(png, info));
            png_destroy_read_struct(&png, &info, nullptr);
            return false;
        }
        if (bit_depth == 16) {
            state->error = "16-bit masks are not supported";
            png_destroy_read_struct(&png, &info, nullptr);
            return false;
        }
        png_set_packing(png);
    } else {
        png_set_expand(png);
        png_set_strip_16(png);
        png_set_strip_alpha(png);
        png_set_gray_to_rgb(png);
        png_set_packing(png);
    }
    png_read_update_info(png, info);

    PixelBuffer& buf = *state->out;
    buf.width = static_cast<int>(png_get_image_width(png, info));
    buf.height = static_cast<int>(png_get_image_height(png, info));
    buf.channels = png_get_channels(png, info);
    const size_t rowbytes = png_get_rowbytes(png, info);
    if (rowbytes != size_t(buf.width) * buf.channels) {
        state->error = "unexpected PNG row layout";
        png_destroy_read_struct(&png, &info, nullptr);
        return false;
    }
    buf.data.assign(rowbytes * buf.height, 0);
    for (int y = 0; y < buf.height; ++y) {
        png_read_row(png, buf.data.data() + rowbytes * y, nullptr);
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
}

PixelBuffer read_png(const fs::path& path, bool as_mask)
{
    auto fp = open_file(path, "rb");
    PixelBuffer buf;
    PngDecode state{as_mask, &buf, {}};
    if (!decode_png(fp.get(), &state)) {
        throw Error(fmt::format("cannot decode {}: {}", path.string(), state.error));
    }
    return buf;
}

// ---- JPEG ----

struct JpegErrorManager {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo)
{
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

void jpeg_silent(j_common_ptr) {}

// Decodes (or, with `out` null, only reads the header into `size`).
bool decode_jpeg(FILE* fp, PixelBuffer* out, ImageSize* size, JpegErrorManager* err)
{
    jpeg_decompress_struct cinfo{};
    cinfo.err = jpeg_std_error(&err->pub);
    err->pub.error_exit = jpeg_error_exit;
    err->pub.output_message = jpeg_silent;
    if (setjmp(err->jump)) {
        jpeg_destroy_decompress(&cinfo);
        return false;
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, fp);
    jpeg_read_header(&cinfo, TRUE);
    if (size) {
        size->width = static_cast<int>(cinfo.image_width);
        size->height = static_cast<int>(cinfo.image_height);
    }
    if (out) {
        cinfo.out_color_space = JCS_RGB;
        jpeg_start_decompress(&cinfo);
        out->width = static_cast<int>(cinfo.output_width);
        out->height = static_cast<int>(cinfo.output_height);
        out->channels = 3;
        out->data.assign(size_t(out->width) * out->height * 3, 0);
        while (cinfo.output_scanline < cinfo.output_height) {
            JSAMPROW row = out->data.data() + size_t(cinfo.output_scanline) * out->width * 3;
            jpeg_read_scanlines(&cinfo, &row, 1);
        }
        jpeg_finish_decompress(&cinfo);
    }
    jpeg_destroy_decompress(&cinfo);
    return true;
}

bool encode_jpeg(FILE* fp, const PixelBuffer* buf, int quality, JpegErrorManager* err)
{
    jpeg_compress_struct cinfo{};
    cinfo.err = jpeg_std_error(&err->pub);
    err->pub.error_exit = jpeg_error_exit;
    err->pub.output_message = jpeg_silent;
    if (setjmp(err->jump)) {
        jpeg_destroy_compress(&cinfo);
        return false;
    }
    jpeg_create_compress(&cinfo);
    jpeg_stdio_dest(&cinfo, fp);
    cinfo.image_width = static_cast<JDIMENSION>(buf->width);
    cinfo.image_height = static_cast<JDIMENSION>(buf->height);
    cinfo.input_components = buf->channels;
    cinfo.in_color_space = buf->channels == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        auto* row = const_cast<JSAMPROW>(buf->data.data() + size_t(cinfo.next_scanline) * buf->width * buf->channels);
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
    return true;
}

png_image make_png_image(const PixelBuffer& buf)
{
    if (buf.channels != 1 && buf.channels != 3) {
        throw Error(fmt::format("cannot encode a {}-channel buffer", buf.channels));
    }
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(buf.width);
    image.height = static_cast<png_uint_32>(buf.height);
    image.format = buf.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    return image;
}

std::string lower_extension(const fs::path& path)
{
    std::string ext = path.extension().string();
    for (auto& c : ext) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return ext;
}

}  // namespace

std::optional<EdgePolicy> parse_edge_policy(std::string_view text)
{
    if (text == "distort") {
        return EdgePolicy::distort;
    }
    if (text == "constant") {
        return EdgePolicy::constant;
    }
    if (text == "original") {
        return EdgePolicy::original;
    }
    return std::nullopt;
}

ImageSize probe_size(const fs::path& path)
{
    switch (sniff(path)) {
    case FileKind::png: {
        std::ifstream in(path, std::ios::binary);
        std::array<unsigned char, 24> header{};
        in.read(reinterpret_cast<char*>(header.data()), header.size());
        if (in.gcount() != 24 || std::memcmp(header.data() + 12, "IHDR", 4) != 0) {
            throw Error(fmt::format("truncated PNG header: {}", path.string()));
        }
        auto be32 = [&](int off) {
            return int(uint32_t(header[off]) << 24 | uint32_t(header[off + 1]) << 16 | uint32_t(header[off + 2]) << 8 |
                       uint32_t(header[off + 3]));
        };
        return {be32(16), be32(20)};
    }
    case FileKind::jpeg: {
        auto fp = open_file(path, "rb");
        ImageSize size;
        JpegErrorManager err{};
        if (!decode_jpeg(fp.get(), nullptr, &size, &err)) {
            throw Error(fmt::format("cannot decode {}: {}", path.string(), err.message));
        }
        return size;
    }
    case FileKind::unknown:
        break;
    }
    throw Error(fmt::format("unsupported image format: {}", path.string()));
}

PixelBuffer decode_file(const fs::path& path)
{
    switch (sniff(path)) {
    case FileKind::png:
        return read_png(path, false);
    case FileKind::jpeg: {
        auto fp = open_file(path, "rb");
        PixelBuffer buf;
        JpegErrorManager err{};
        if (!decode_jpeg(fp.get(), &buf, nullptr, &err)) {
            throw Error(fmt::format("cannot decode {}: {}", path.string(), err.message));
        }
        return buf;
    }
    case FileKind::unknown:
        break;
    }
    throw Error(fmt::format("unsupported image format: {}", path.string()));
}

PixelBuffer read_image(const fs::path& rootdir, std::string_view imagefile)
{
    return decode_file(rootdir / fs::path(imagefile));
}

PixelBuffer read_mask(const fs::path& rootdir, std::string_view maskfile)
{
    fs::path path = rootdir / fs::path(maskfile);
    if (sniff(path) != FileKind::png) {
        throw Error(fmt::format("mask must be a PNG file: {}", path.string()));
    }
    return read_png(path, true);
}

std::vector<uint8_t> encode_png(const PixelBuffer& buf)
{
    png_image image = make_png_image(buf);
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, buf.data.data(), 0, nullptr)) {
        throw Error(fmt::format("PNG encoding failed: {}", image.message));
    }
    std::vector<uint8_t> bytes(size);
    if (!png_image_write_to_memory(&image, bytes.data(), &size, 0, buf.data.data(), 0, nullptr)) {
        throw Error(fmt::format("PNG encoding failed: {}", image.message));
    }
    bytes.resize(size);
    return bytes;
}

void write_png(const fs::path& path, const PixelBuffer& buf)
{
    png_image image = make_png_image(buf);
    if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data.data(), 0, nullptr)) {
        throw Error(fmt::format("cannot write {}: {}", path.string(), image.message));
    }
}

void write_jpeg(const fs::path& path, const PixelBuffer& buf, int quality)
{
    if (buf.channels != 1 && buf.channels != 3) {
        throw Error(fmt::format("cannot encode a {}-channel buffer", buf.channels));
    }
    auto fp = open_file(path, "wb");
    JpegErrorManager err{};
    if (!encode_jpeg(fp.get(), &buf, quality, &err)) {
        throw Error(fmt::format("cannot write {}: {}", path.string(), err.message));
    }
}

void write_image(const fs::path& path, const PixelBuffer& buf, int quality)
{
    std::string ext = lower_extension(path);
    if (ext == ".png") {
        write_png(path, buf);
    } else if (ext == ".jpg" || ext == ".jpeg") {
        write_jpeg(path, buf, quality);
    } else {
        throw Error(fmt::format("unsupported output format '{}'", ext));
    }
}

PixelBuffer resize_bilinear(const PixelBuffer& src, int width, int height)
{
    if (width <= 0 || height <= 0) {
        throw Error("resize target must be positive");
    }
    if (src.width == width && src.height == height) {
        return src;
    }
    PixelBuffer dst(width, height, src.channels);
    const double sx = double(src.width) / width;
    const double sy = double(src.height) / height;
    for (int y = 0; y < height; ++y) {
        double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(src.height - 1));
        int y0 = static_cast<int>(fy);
        int y1 = std::min(y0 + 1, src.height - 1);
        double wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(src.width - 1));
            int x0 = static_cast<int>(fx);
            int x1 = std::min(x0 + 1, src.width - 1);
            double wx = fx - x0;
            for (int c = 0; c < src.channels; ++c) {
                double top = src.at(x0, y0, c) * (1 - wx) + src.at(x1, y0, c) * wx;
                double bottom = src.at(x0, y1, c) * (1 - wx) + src.at(x1, y1, c) * wx;
                dst.at(x, y, c) = static_cast<uint8_t>(std::lround(top * (1 - wy) + bottom * wy));
            }
        }
    }
    return dst;
}

PixelRect to_pixel_grid(const Box& box)
{
    return {static_cast<int>(std::floor(box.x)), static_cast<int>(std::floor(box.y)),
            static_cast<int>(std::lround(box.width)), static_cast<int>(std::lround(box.height))};
}

CropResult crop_and_resize(const PixelBuffer& src, const Box& box, int target_width, int target_height,
                           EdgePolicy policy)
{
    const PixelRect rect = to_pixel_grid(box);
    if (rect.width <= 0 || rect.height <= 0) {
        throw Error("cannot crop a zero-area box");
    }
    if (policy != EdgePolicy::original && (target_width <= 0 || target_height <= 0)) {
        throw Error("crop target size must be positive");
    }
    if (rect.x >= src.width || rect.y >= src.height || rect.x + rect.width <= 0 || rect.y + rect.height <= 0) {
        throw Error("crop box lies outside the image");
    }

    PixelBuffer region(rect.width, rect.height, src.channels);
    for (int y = 0; y < rect.height; ++y) {
        const int sy = rect.y + y;
        if (sy < 0 || sy >= src.height) {
            continue;
        }
        for (int x = 0; x < rect.width; ++x) {
            const int sx = rect.x + x;
            if (sx < 0 || sx >= src.width) {
                continue;
            }
            for (int c = 0; c < src.channels; ++c) {
                region.at(x, y, c) = src.at(sx, sy, c);
            }
        }
    }

    CropResult result;
    result.source = rect;
    switch (policy) {
    case EdgePolicy::original:
        result.pixels = std::move(region);
        result.content = {0, 0, double(rect.width), double(rect.height)};
        break;
    case EdgePolicy::distort:
        result.pixels = resize_bilinear(region, target_width, target_height);
        result.content = {0, 0, double(target_width), double(target_height)};
        result.scale_x = double(target_width) / rect.width;
        result.scale_y = double(target_height) / rect.height;
        break;
    case EdgePolicy::constant: {
        const double scale = std::min(double(target_width) / rect.width, double(target_height) / rect.height);
        const int content_w = std::clamp(static_cast<int>(std::lround(rect.width * scale)), 1, target_width);
        const int content_h = std::clamp(static_cast<int>(std::lround(rect.height * scale)), 1, target_height);
        const int off_x = (target_width - content_w) / 2;
        const int off_y = (target_height - content_h) / 2;
        PixelBuffer scaled = resize_bilinear(region, content_w, content_h);
        PixelBuffer canvas(target_width, target_height, src.channels);
        for (int y = 0; y < content_h; ++y) {
            std::memcpy(&canvas.at(off_x, off_y + y), &scaled.at(0, y), size_t(content_w) * src.channels);
        }
        result.pixels = std::move(canvas);
        result.content = {double(off_x), double(off_y), double(content_w), double(content_h)};
        result.scale_x = double(content_w) / rect.width;
        result.scale_y = double(content_h) / rect.height;
        result.offset_x = off_x;
        result.offset_y = off_y;
        break;
    }
    }
    return result;
}

std::array<uint8_t, 3> label_color(int label)
{
    if (label == 0) {
        return {0, 0, 0};
    }
    // Golden-ratio hue walk gives well-separated colors for consecutive labels.
    const double hue = std::fmod(label * 0.618033988749895, 1.0) * 6.0;
    const int sector = static_cast<int>(hue);
    const double f = hue - sector;
    const auto v = uint8_t(230);
    const auto p = uint8_t(60);
    const auto q = static_cast<uint8_t>(230 - 170 * f);
    const auto t = static_cast<uint8_t>(60 + 170 * f);
    switch (sector % 6) {
    case 0:
        return {v, t, p};
    case 1:
        return {q, v, p};
    case 2:
        return {p, v, t};
    case 3:
        return {p, q, v};
    case 4:
        return {t, p, v};
    default:
        return {v, p, q};
    }
}

PixelBuffer colorize_mask(const PixelBuffer& mask)
{
    PixelBuffer out(mask.width, mask.height, 3);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            auto color = label_color(mask.at(x, y));
            for (int c = 0; c < 3; ++c) {
                out.at(x, y, c) = color[c];
            }
        }
    }
    return out;
}

}  // namespace labeldb::media
