#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "facekit/errors.hpp"

namespace facekit {

// Grayscale raster with pixels in [0,1], row-major.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<float> pixels;

    float at(int y, int x) const {
        return pixels[static_cast<std::size_t>(y) * width + x];
    }
    float& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }

    static Image filled(int w, int h, float v) {
        Image im;
        im.width = w;
        im.height = h;
        im.pixels.assign(static_cast<std::size_t>(w) * h, v);
        return im;
    }
};

inline float image_mean(const Image& im) {
    double s = 0.0;
    for (float p : im.pixels) s += p;
    return im.pixels.empty() ? 0.0f : static_cast<float>(s / im.pixels.size());
}

inline float image_stddev(const Image& im) {
    if (im.pixels.empty()) return 0.0f;
    const double m = image_mean(im);
    double s = 0.0;
    for (float p : im.pixels) s += (p - m) * (p - m);
    return static_cast<float>(std::sqrt(s / im.pixels.size()));
}

// ---------------------------------------------------------------------------
// Binary PGM (P5, maxval <= 255). ASCII "P2" files are rejected.
// ---------------------------------------------------------------------------

namespace detail {

inline int pgm_next_int(std::istream& in, const std::string& where) {
    // skip whitespace and '#' comment lines between header tokens
    int ch = in.peek();
    while (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n' || ch == '#') {
        if (ch == '#') {
            std::string line;
            std::getline(in, line);
        } else {
            in.get();
        }
        ch = in.peek();
    }
    int value = 0;
    if (!(in >> value)) throw ParseError(where + ": malformed PGM header");
    return value;
}

}  // namespace detail

inline Image decode_pgm(std::istream& in, const std::string& where) {
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (!in || m0 != 'P')
        throw ParseError(where + ": not a PGM file (bad magic)");
    if (m1 == '2')
        throw ParseError(where + ": ASCII PGM (P2) is unsupported, expected binary P5");
    if (m1 != '5')
        throw ParseError(where + ": not a PGM file (bad magic)");
    const int w = detail::pgm_next_int(in, where);
    const int h = detail::pgm_next_int(in, where);
    const int maxval = detail::pgm_next_int(in, where);
    if (w <= 0 || h <= 0) throw ParseError(where + ": non-positive PGM dimensions");
    if (maxval <= 0 || maxval > 255)
        throw ParseError(where + ": unsupported PGM maxval " + std::to_string(maxval));
    in.get();  // single whitespace byte after maxval
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size())
        throw ParseError(where + ": truncated PGM pixel data");
    Image im;
    im.width = w;
    im.height = h;
    im.pixels.resize(raw.size());
    const float scale = 1.0f / static_cast<float>(maxval);
    for (std::size_t i = 0; i < raw.size(); ++i) im.pixels[i] = raw[i] * scale;
    return im;
}

inline Image decode_pgm(const std::string& bytes, const std::string& where = "<memory>") {
    std::istringstream in(bytes);
    return decode_pgm(in, where);
}

inline Image load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open file");
    return decode_pgm(in, path);
}

inline std::string encode_pgm(const Image& im) {
    std::string out = "P5\n" + std::to_string(im.width) + " " + std::to_string(im.height) + "\n255\n";
    out.reserve(out.size() + im.pixels.size());
    for (float p : im.pixels) {
        const float clamped = std::clamp(p, 0.0f, 1.0f);
        out.push_back(static_cast<char>(
            static_cast<unsigned char>(std::lround(clamped * 255.0f))));
    }
    return out;
}

inline void save_pgm(const Image& im, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError(path + ": cannot open file for writing");
    const std::string bytes = encode_pgm(im);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ParseError(path + ": short write");
}

// ---------------------------------------------------------------------------
// Bilinear resize with corner-aligned sampling: source coordinate of output
// pixel i is i * (src_len - 1) / (dst_len - 1), so the four corners map
// exactly and interior samples interpolate the two nearest grid lines.
// ---------------------------------------------------------------------------

inline Image bilinear_resize(const Image& src, int out_w, int out_h) {
    if (src.width <= 0 || src.height <= 0) throw DimensionError("bilinear_resize: empty source");
    if (out_w <= 0 || out_h <= 0) throw DimensionError("bilinear_resize: empty target");
    Image dst;
    dst.width = out_w;
    dst.height = out_h;
    dst.pixels.resize(static_cast<std::size_t>(out_w) * out_h);
    const float sx = out_w > 1 ? static_cast<float>(src.width - 1) / (out_w - 1) : 0.0f;
    const float sy = out_h > 1 ? static_cast<float>(src.height - 1) / (out_h - 1) : 0.0f;
    for (int y = 0; y < out_h; ++y) {
        const float fy = y * sy;
        const int y0 = std::min(static_cast<int>(fy), src.height - 1);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const float wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const float fx = x * sx;
            const int x0 = std::min(static_cast<int>(fx), src.width - 1);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const float wx = fx - x0;
            const float top = src.at(y0, x0) * (1.0f - wx) + src.at(y0, x1) * wx;
            const float bot = src.at(y1, x0) * (1.0f - wx) + src.at(y1, x1) * wx;
            dst.at(y, x) = top * (1.0f - wy) + bot * wy;
        }
    }
    return dst;
}

}  // namespace facekit
