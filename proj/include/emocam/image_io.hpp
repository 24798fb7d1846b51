#pragma once

#include <cctype>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "emocam/image.hpp"
#include "emocam/util.hpp"

namespace emocam {

namespace detail {

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
};

inline void jpeg_error_exit_longjmp(j_common_ptr cinfo) {
    std::longjmp(reinterpret_cast<JpegErrorMgr*>(cinfo->err)->jump, 1);
}

inline ImageRGBA decode_png_bytes(const std::vector<std::uint8_t>& bytes,
                                  const std::string& origin) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size()))
        throw Error("PNG decode failed: " + origin + ": " + png.message);
    png.format = PNG_FORMAT_RGBA;
    ImageRGBA img;
    img.width = static_cast<int>(png.width);
    img.height = static_cast<int>(png.height);
    img.pixels.resize(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
        const std::string msg = png.message;
        png_image_free(&png);
        throw Error("PNG decode failed: " + origin + ": " + msg);
    }
    return img;
}

inline ImageRGBA decode_jpeg_bytes(const std::vector<std::uint8_t>& bytes,
                                   const std::string& origin) {
    jpeg_decompress_struct cinfo{};
    JpegErrorMgr jerr{};
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit_longjmp;

    ImageRGBA img;
    std::vector<std::uint8_t> row;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw Error("JPEG decode failed: " + origin);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), bytes.size());
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    img.width = static_cast<int>(cinfo.output_width);
    img.height = static_cast<int>(cinfo.output_height);
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 4);
    row.resize(static_cast<std::size_t>(img.width) * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        std::uint8_t* rowp = row.data();
        const int y = static_cast<int>(cinfo.output_scanline);
        jpeg_read_scanlines(&cinfo, &rowp, 1);
        for (int x = 0; x < img.width; ++x) {
            std::uint8_t* p = img.px(x, y);
            p[0] = row[static_cast<std::size_t>(x) * 3];
            p[1] = row[static_cast<std::size_t>(x) * 3 + 1];
            p[2] = row[static_cast<std::size_t>(x) * 3 + 2];
            p[3] = 255;
        }
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return img;
}

// Parses the header of a binary PNM (P5/P6, maxval 255) and returns the
// offset of the first payload byte.
struct PnmHeader {
    int width = 0, height = 0;
    std::size_t payload = 0;
};

inline PnmHeader parse_pnm_header(const std::vector<std::uint8_t>& bytes,
                                  const std::string& origin) {
    std::size_t pos = 2;
    int fields[3];
    for (int f = 0; f < 3; ++f) {
        while (pos < bytes.size() &&
               (std::isspace(bytes[pos]) || bytes[pos] == '#')) {
            if (bytes[pos] == '#')
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            else
                ++pos;
        }
        int v = 0;
        bool any = false;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            ++pos;
            any = true;
        }
        if (!any) throw Error("PNM decode failed: truncated header in " + origin);
        fields[f] = v;
    }
    if (pos >= bytes.size() || !std::isspace(bytes[pos]))
        throw Error("PNM decode failed: malformed header in " + origin);
    ++pos;
    if (fields[2] != 255)
        throw Error("PNM decode failed: only maxval 255 is supported, got " +
                    std::to_string(fields[2]) + " in " + origin);
    if (fields[0] < 1 || fields[1] < 1)
        throw Error("PNM decode failed: bad dimensions in " + origin);
    return {fields[0], fields[1], pos};
}

inline ImageRGBA decode_pnm_bytes(const std::vector<std::uint8_t>& bytes,
                                  const std::string& origin) {
    const bool color = bytes[1] == '6';
    const PnmHeader h = parse_pnm_header(bytes, origin);
    const std::size_t per_px = color ? 3 : 1;
    const std::size_t need = h.payload + static_cast<std::size_t>(h.width) * h.height * per_px;
    if (bytes.size() < need) throw Error("PNM decode failed: truncated payload in " + origin);
    ImageRGBA img;
    img.width = h.width;
    img.height = h.height;
    img.pixels.resize(static_cast<std::size_t>(h.width) * h.height * 4);
    const std::uint8_t* src = bytes.data() + h.payload;
    for (std::size_t i = 0; i < static_cast<std::size_t>(h.width) * h.height; ++i) {
        std::uint8_t* p = img.pixels.data() + i * 4;
        if (color) {
            p[0] = src[i * 3];
            p[1] = src[i * 3 + 1];
            p[2] = src[i * 3 + 2];
        } else {
            p[0] = p[1] = p[2] = src[i];
        }
        p[3] = 255;
    }
    return img;
}

}  // namespace detail

// Decodes PNG, JPEG, PPM (P6) or PGM (P5), sniffing the format from magic
// bytes. Formats without alpha come back fully opaque.
inline ImageRGBA decode_image_bytes(const std::vector<std::uint8_t>& bytes,
                                    const std::string& origin) {
    if (bytes.size() >= 8 && bytes[0] == 0x89 && bytes[1] == 'P' && bytes[2] == 'N' &&
        bytes[3] == 'G')
        return detail::decode_png_bytes(bytes, origin);
    if (bytes.size() >= 2 && bytes[0] == 0xff && bytes[1] == 0xd8)
        return detail::decode_jpeg_bytes(bytes, origin);
    if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6'))
        return detail::decode_pnm_bytes(bytes, origin);
    throw Error("unsupported image format: " + origin);
}

inline ImageRGBA decode_image(const std::string& path) {
    return decode_image_bytes(read_file_bytes(path), path);
}

inline void write_png(const std::string& path, const ImageRGBA& img) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(img.width);
    png.height = static_cast<png_uint_32>(img.height);
    png.format = PNG_FORMAT_RGBA;
    if (!png_image_write_to_file(&png, path.c_str(), 0, img.pixels.data(), 0, nullptr))
        throw Error("PNG encode failed: " + path + ": " + png.message);
}

inline void write_ppm(const std::string& path, const ImageRGBA& img) {
    std::vector<std::uint8_t> out;
    const std::string header =
        "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.insert(out.end(), header.begin(), header.end());
    for (std::size_t i = 0; i < img.pixels.size(); i += 4) {
        out.push_back(img.pixels[i]);
        out.push_back(img.pixels[i + 1]);
        out.push_back(img.pixels[i + 2]);
    }
    write_file_bytes(path, out.data(), out.size());
}

inline void write_pgm(const std::string& path, int width, int height,
                      const std::vector<std::uint8_t>& gray) {
    if (gray.size() != static_cast<std::size_t>(width) * height)
        throw Error("PGM payload size mismatch");
    std::vector<std::uint8_t> out;
    const std::string header =
        "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    out.insert(out.end(), header.begin(), header.end());
    out.insert(out.end(), gray.begin(), gray.end());
    write_file_bytes(path, out.data(), out.size());
}

}  // namespace emocam
