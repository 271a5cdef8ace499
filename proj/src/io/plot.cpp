#include "rpf/io/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "rpf/io/image_io.hpp"

namespace rpf::io {

namespace {

// 5x7 glyphs for "0123456789.-e+", one bit per pixel, row-major
const uint8_t kGlyphs[14][7] = {
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
    {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2
    {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
    {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
    {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
    {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
    {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C},  // .
    {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00},  // -
    {0x00, 0x00, 0x0E, 0x11, 0x1F, 0x10, 0x0E},  // e
    {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00},  // +
};

int glyph_index(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    switch (c) {
        case '.': return 10;
        case '-': return 11;
        case 'e': return 12;
        case '+': return 13;
        default: return -1;
    }
}

struct Canvas {
    int w, h;
    core::Tensor rgb;  // (3,H,W), white background
    Canvas(int width, int height) : w(width), h(height), rgb(core::Tensor::full({3, height, width}, 1.0)) {}

    void put(int x, int y, double r, double g, double b) {
        if (x < 0 || x >= w || y < 0 || y >= h) return;
        rgb.at(0, y, x) = r;
        rgb.at(1, y, x) = g;
        rgb.at(2, y, x) = b;
    }

    void line(int x0, int y0, int x1, int y1, double r, double g, double b) {
        const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
        const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        while (true) {
            put(x0, y0, r, g, b);
            if (x0 == x1 && y0 == y1) break;
            const int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    }

    void text(int x, int y, const std::string& s) {
        for (char c : s) {
            const int gi = glyph_index(c);
            if (gi >= 0)
                for (int yy = 0; yy < 7; ++yy)
                    for (int xx = 0; xx < 5; ++xx)
                        if (kGlyphs[gi][yy] & (1 << (4 - xx))) put(x + xx, y + yy, 0.15, 0.15, 0.15);
            x += 6;
        }
    }
};

std::string fmt_tick(double v) {
    char buf[32];
    if (v != 0.0 && (std::fabs(v) >= 1e4 || std::fabs(v) < 1e-2))
        std::snprintf(buf, sizeof(buf), "%.1e", v);
    else
        std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

}  // namespace

void render_line_plot(const std::string& path, const std::vector<Series>& series,
                      bool log_y, int width, int height) {
    Canvas canvas(width, height);
    const int ml = 70, mr = 20, mt = 20, mb = 40;  // margins
    const int px0 = ml, px1 = width - mr, py0 = mt, py1 = height - mb;

    size_t max_n = 1;
    double lo = 0.0, hi = 1.0;
    bool first = true;
    for (const auto& s : series) {
        max_n = std::max(max_n, s.y.size());
        for (double v : s.y) {
            const double t = log_y ? std::log10(1.0 + std::max(0.0, v)) : v;
            if (first) {
                lo = hi = t;
                first = false;
            } else {
                lo = std::min(lo, t);
                hi = std::max(hi, t);
            }
        }
    }
    if (hi <= lo) hi = lo + 1.0;

    auto sx = [&](size_t i) {
        return px0 + static_cast<int>(std::llround((px1 - px0) * (max_n > 1 ? double(i) / double(max_n - 1) : 0.0)));
    };
    auto sy = [&](double v) {
        const double t = log_y ? std::log10(1.0 + std::max(0.0, v)) : v;
        return py1 - static_cast<int>(std::llround((py1 - py0) * (t - lo) / (hi - lo)));
    };

    // axes
    canvas.line(px0, py0, px0, py1, 0.1, 0.1, 0.1);
    canvas.line(px0, py1, px1, py1, 0.1, 0.1, 0.1);
    for (int k = 0; k <= 4; ++k) {
        const double t = lo + (hi - lo) * k / 4.0;
        const int y = py1 - (py1 - py0) * k / 4;
        canvas.line(px0 - 4, y, px0, y, 0.1, 0.1, 0.1);
        canvas.text(6, y - 3, fmt_tick(t));
        const size_t xi = max_n > 1 ? (max_n - 1) * static_cast<size_t>(k) / 4 : 0;
        const int x = sx(xi);
        canvas.line(x, py1, x, py1 + 4, 0.1, 0.1, 0.1);
        canvas.text(x - 8, py1 + 8, fmt_tick(static_cast<double>(xi)));
    }

    const double palette[6][3] = {{0.85, 0.2, 0.2}, {0.2, 0.4, 0.85}, {0.15, 0.65, 0.3},
                                  {0.8, 0.55, 0.1}, {0.55, 0.25, 0.7}, {0.2, 0.65, 0.65}};
    for (size_t si = 0; si < series.size(); ++si) {
        const auto& col = palette[si % 6];
        const auto& ys = series[si].y;
        for (size_t i = 1; i < ys.size(); ++i)
            canvas.line(sx(i - 1), sy(ys[i - 1]), sx(i), sy(ys[i]), col[0], col[1], col[2]);
        // legend swatch
        const int ly = py0 + static_cast<int>(si) * 10;
        canvas.line(px1 - 30, ly, px1 - 12, ly, col[0], col[1], col[2]);
    }

    write_png_rgb(path, canvas.rgb);
}

}  // namespace rpf::io
