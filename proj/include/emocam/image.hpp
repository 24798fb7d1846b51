#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "emocam/activation_map.hpp"
#include "emocam/model.hpp"
#include "emocam/tensor.hpp"
#include "emocam/util.hpp"

namespace emocam {

struct ImageRGBA {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // row-major RGBA

    static ImageRGBA blank(int w, int h, std::uint8_t r = 0, std::uint8_t g = 0,
                           std::uint8_t b = 0, std::uint8_t a = 255) {
        ImageRGBA img;
        img.width = w;
        img.height = h;
        img.pixels.resize(static_cast<std::size_t>(w) * h * 4);
        for (std::size_t i = 0; i < img.pixels.size(); i += 4) {
            img.pixels[i] = r;
            img.pixels[i + 1] = g;
            img.pixels[i + 2] = b;
            img.pixels[i + 3] = a;
        }
        return img;
    }

    std::uint8_t* px(int x, int y) {
        return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 4;
    }
    const std::uint8_t* px(int x, int y) const {
        return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 4;
    }
};

struct PlanarImageF32 {
    int channels = 0;
    int width = 0;
    int height = 0;
    std::vector<float> data;  // planar, row-major within each channel
};

namespace detail {

// Half-pixel-center source coordinate for a destination index. Written in
// lerp form so same-size resizes and constant images reproduce exactly.
struct BilinearCoord {
    int i0, i1;
    double frac;
};

inline BilinearCoord bilinear_coord(int dst, int in_size, int out_size) {
    double src = (dst + 0.5) * (static_cast<double>(in_size) / out_size) - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_size - 1));
    const int i0 = static_cast<int>(std::floor(src));
    return {i0, std::min(i0 + 1, in_size - 1), src - i0};
}

inline double lerp(double a, double b, double t) { return a + t * (b - a); }

}  // namespace detail

inline ImageRGBA resize_bilinear(const ImageRGBA& img, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1) throw Error("resize target dims must be >= 1");
    ImageRGBA out;
    out.width = out_w;
    out.height = out_h;
    out.pixels.resize(static_cast<std::size_t>(out_w) * out_h * 4);
    for (int y = 0; y < out_h; ++y) {
        const auto cy = detail::bilinear_coord(y, img.height, out_h);
        for (int x = 0; x < out_w; ++x) {
            const auto cx = detail::bilinear_coord(x, img.width, out_w);
            const std::uint8_t* p00 = img.px(cx.i0, cy.i0);
            const std::uint8_t* p01 = img.px(cx.i1, cy.i0);
            const std::uint8_t* p10 = img.px(cx.i0, cy.i1);
            const std::uint8_t* p11 = img.px(cx.i1, cy.i1);
            std::uint8_t* q = out.px(x, y);
            for (int c = 0; c < 4; ++c) {
                const double top = detail::lerp(p00[c], p01[c], cx.frac);
                const double bottom = detail::lerp(p10[c], p11[c], cx.frac);
                q[c] = static_cast<std::uint8_t>(
                    std::clamp<long>(std::lround(detail::lerp(top, bottom, cy.frac)), 0, 255));
            }
        }
    }
    return out;
}

// Single-channel float variant, used for upsampling attribution maps.
inline std::vector<float> resize_bilinear_map(const std::vector<float>& values, int w, int h,
                                              int out_w, int out_h) {
    if (out_w < 1 || out_h < 1) throw Error("resize target dims must be >= 1");
    std::vector<float> out(static_cast<std::size_t>(out_w) * out_h);
    for (int y = 0; y < out_h; ++y) {
        const auto cy = detail::bilinear_coord(y, h, out_h);
        for (int x = 0; x < out_w; ++x) {
            const auto cx = detail::bilinear_coord(x, w, out_w);
            const double v00 = values[static_cast<std::size_t>(cy.i0) * w + cx.i0];
            const double v01 = values[static_cast<std::size_t>(cy.i0) * w + cx.i1];
            const double v10 = values[static_cast<std::size_t>(cy.i1) * w + cx.i0];
            const double v11 = values[static_cast<std::size_t>(cy.i1) * w + cx.i1];
            out[static_cast<std::size_t>(y) * out_w + x] = static_cast<float>(detail::lerp(
                detail::lerp(v00, v01, cx.frac), detail::lerp(v10, v11, cx.frac), cy.frac));
        }
    }
    return out;
}

// Resizes to the model's input dims, scales to [0,1], normalizes per channel
// and lays the result out planar channel-major.
inline Tensor to_model_input(const ImageRGBA& img, const ModelSpec& model) {
    const int c = model.input.channels, h = model.input.height, w = model.input.width;
    const ImageRGBA resized =
        (img.width == w && img.height == h) ? img : resize_bilinear(img, w, h);
    Tensor t = Tensor::zeros({c, h, w});
    for (int ch = 0; ch < c; ++ch) {
        const double mean = model.normalization.mean[ch];
        const double sd = model.normalization.std[ch];
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::uint8_t* p = resized.px(x, y);
                double v;
                if (c == 1)
                    v = (static_cast<double>(p[0]) + p[1] + p[2]) / 3.0 / 255.0;
                else
                    v = static_cast<double>(p[ch]) / 255.0;
                t.at(ch, y, x) = static_cast<float>((v - mean) / sd);
            }
        }
    }
    return t;
}

// Source-over compositing of `patch` onto `base`, with the patch first
// resized so its height is round(target_height_fraction * base height),
// aspect ratio preserved, and centered at the given relative coordinates.
// Regions extending past the border are clipped.
inline ImageRGBA composite_over(const ImageRGBA& base, const ImageRGBA& patch,
                                double center_x, double center_y,
                                double target_height_fraction) {
    if (!(target_height_fraction > 0.0 && target_height_fraction <= 1.0))
        throw Error("target height fraction must be in (0, 1]");
    if (patch.width < 1 || patch.height < 1) throw Error("patch image is empty");
    const int ph = std::max<long>(1, std::lround(target_height_fraction * base.height));
    const int pw = std::max<long>(
        1, std::lround(static_cast<double>(ph) * patch.width / patch.height));
    const ImageRGBA resized = resize_bilinear(patch, pw, ph);

    const int x0 = static_cast<int>(std::lround(center_x * base.width - pw / 2.0));
    const int y0 = static_cast<int>(std::lround(center_y * base.height - ph / 2.0));

    ImageRGBA out = base;
    for (int py = 0; py < ph; ++py) {
        const int ty = y0 + py;
        if (ty < 0 || ty >= base.height) continue;
        for (int px = 0; px < pw; ++px) {
            const int tx = x0 + px;
            if (tx < 0 || tx >= base.width) continue;
            const std::uint8_t* s = resized.px(px, py);
            std::uint8_t* d = out.px(tx, ty);
            if (s[3] == 0) continue;
            if (s[3] == 255) {
                d[0] = s[0];
                d[1] = s[1];
                d[2] = s[2];
                d[3] = 255;
                continue;
            }
            const double sa = s[3] / 255.0;
            const double da = d[3] / 255.0;
            const double oa = sa + da * (1.0 - sa);
            for (int ch = 0; ch < 3; ++ch) {
                const double v = (s[ch] * sa + d[ch] * da * (1.0 - sa)) / oa;
                d[ch] = static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
            }
            d[3] = static_cast<std::uint8_t>(std::clamp<long>(std::lround(oa * 255.0), 0, 255));
        }
    }
    return out;
}

// Linear blue-to-red colormap over [0,1].
inline void colormap_blue_red(float v, std::uint8_t rgb[3]) {
    const double t = std::clamp(static_cast<double>(v), 0.0, 1.0);
    rgb[0] = static_cast<std::uint8_t>(std::lround(255.0 * t));
    rgb[1] = 0;
    rgb[2] = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - t)));
}

// Equal blend of the image with the colormapped map.
inline ImageRGBA render_heatmap_overlay(const ImageRGBA& img, const ActivationMap& map) {
    if (map.width != img.width || map.height != img.height)
        throw Error("overlay dimension mismatch: image is " + std::to_string(img.width) + "x" +
                    std::to_string(img.height) + ", map is " + std::to_string(map.width) + "x" +
                    std::to_string(map.height));
    ImageRGBA out = img;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            std::uint8_t rgb[3];
            colormap_blue_red(map.at(x, y), rgb);
            std::uint8_t* p = out.px(x, y);
            for (int c = 0; c < 3; ++c)
                p[c] = static_cast<std::uint8_t>(
                    std::lround(0.5 * p[c] + 0.5 * rgb[c]));
            p[3] = 255;
        }
    }
    return out;
}

// Axis-aligned rectangle outline, clipped to the image.
inline void draw_rect(ImageRGBA& img, double x_min, double y_min, double x_max, double y_max,
                      const std::uint8_t rgba[4], int thickness = 2) {
    const int x0 = static_cast<int>(std::lround(x_min));
    const int y0 = static_cast<int>(std::lround(y_min));
    const int x1 = static_cast<int>(std::lround(x_max)) - 1;
    const int y1 = static_cast<int>(std::lround(y_max)) - 1;
    auto put = [&](int x, int y) {
        if (x < 0 || x >= img.width || y < 0 || y >= img.height) return;
        std::uint8_t* p = img.px(x, y);
        p[0] = rgba[0];
        p[1] = rgba[1];
        p[2] = rgba[2];
        p[3] = rgba[3];
    };
    for (int t = 0; t < thickness; ++t) {
        for (int x = x0; x <= x1; ++x) {
            put(x, y0 + t);
            put(x, y1 - t);
        }
        for (int y = y0; y <= y1; ++y) {
            put(x0 + t, y);
            put(x1 - t, y);
        }
    }
}

}  // namespace emocam
