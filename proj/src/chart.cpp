#include "rationalets/chart.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "glyphs.hpp"
#include "rationalets/error.hpp"
#include "rationalets/util.hpp"

namespace rationalets {

namespace {

constexpr int kLeftMargin = 80;
constexpr int kRightMargin = 16;
constexpr int kTitleStrip = 18;
constexpr int kBottomStrip = 20;
constexpr int kMinPanelHeight = kTitleStrip + kBottomStrip + 10;
constexpr int kMaxTicks = 6;

class Canvas {
public:
    Canvas(int w, int h, Rgb bg) : raster_{w, h, {}} {
        raster_.pixels.resize(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3);
        for (std::size_t i = 0; i < raster_.pixels.size(); i += 3) {
            raster_.pixels[i] = bg.r;
            raster_.pixels[i + 1] = bg.g;
            raster_.pixels[i + 2] = bg.b;
        }
    }

    void set(int x, int y, Rgb c) {
        if (x < 0 || y < 0 || x >= raster_.width || y >= raster_.height) return;
        const auto i =
            (static_cast<std::size_t>(y) * static_cast<std::size_t>(raster_.width) + static_cast<std::size_t>(x)) * 3;
        raster_.pixels[i] = c.r;
        raster_.pixels[i + 1] = c.g;
        raster_.pixels[i + 2] = c.b;
    }

    void hline(int x0, int x1, int y, Rgb c) {
        for (int x = x0; x <= x1; ++x) set(x, y, c);
    }
    void vline(int x, int y0, int y1, Rgb c) {
        for (int y = y0; y <= y1; ++y) set(x, y, c);
    }

    void stamp(int x, int y, int size, Rgb c) {
        const int off = size / 2;
        for (int dy = 0; dy < size; ++dy)
            for (int dx = 0; dx < size; ++dx) set(x - off + dx, y - off + dy, c);
    }

    void line(int x0, int y0, int x1, int y1, int width, Rgb c) {
        const int dx = std::abs(x1 - x0);
        const int dy = -std::abs(y1 - y0);
        const int sx = x0 < x1 ? 1 : -1;
        const int sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        for (;;) {
            stamp(x0, y0, width, c);
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

    void text(int x, int y, const std::string& s, Rgb c) {
        using namespace chart_detail;
        for (char ch : s) {
            auto code = static_cast<unsigned char>(ch);
            if (code < 0x20 || code > 0x7E) code = '?';
            const auto& glyph = kGlyphs[code - 0x20];
            for (int gy = 0; gy < kGlyphHeight; ++gy) {
                for (int gx = 0; gx < kGlyphWidth; ++gx) {
                    if (glyph[static_cast<std::size_t>(gy)] & (1u << (kGlyphWidth - 1 - gx))) set(x + gx, y + gy, c);
                }
            }
            x += kGlyphWidth;
        }
    }

    Raster take() { return std::move(raster_); }

private:
    Raster raster_;
};

int text_width(const std::string& s) { return static_cast<int>(s.size()) * chart_detail::kGlyphWidth; }

std::string short_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

std::string tick_label(std::int64_t ts) {
    auto iso = format_iso8601(ts);  // YYYY-MM-DDTHH:MM:SS
    iso[10] = ' ';
    return iso.substr(0, 16);
}

std::vector<std::size_t> tick_indices(std::size_t n) {
    std::vector<std::size_t> out;
    if (n == 0) return out;
    if (n == 1) return {0};
    const std::size_t ticks = std::min<std::size_t>(n, kMaxTicks);
    for (std::size_t k = 0; k < ticks; ++k) {
        out.push_back(static_cast<std::size_t>(
            std::llround(static_cast<double>(k) * static_cast<double>(n - 1) / static_cast<double>(ticks - 1))));
    }
    return out;
}

int x_position(const PanelRect& area, std::size_t i, std::size_t n) {
    if (n <= 1) return (area.left + area.right) / 2;
    return area.left + static_cast<int>(std::llround(static_cast<double>(i) * (area.right - area.left) /
                                                     static_cast<double>(n - 1)));
}

void png_write_to_vector(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

}  // namespace

PanelRect panel_plot_area(const ChartStyle& style, std::size_t index) {
    const int y0 = static_cast<int>(index) * style.panel_height;
    return {kLeftMargin, y0 + kTitleStrip, style.width - kRightMargin - 1, y0 + style.panel_height - kBottomStrip};
}

Raster render_raster(const Sample& sample, const ChartStyle& style) {
    const Matrix& w = sample.window;
    if (w.rows() == 0 || w.cols() == 0) throw RenderError("sample '" + sample.id + "': empty window");
    if (style.panel_height < kMinPanelHeight || style.width <= kLeftMargin + kRightMargin + 10) {
        throw RenderError("chart canvas too small");
    }
    if (style.palette.empty()) throw RenderError("chart palette is empty");
    for (std::size_t r = 0; r < w.rows(); ++r) {
        for (std::size_t c = 0; c < w.cols(); ++c) {
            if (!std::isfinite(w(r, c))) {
                const std::string name = c < sample.variable_names.size() ? sample.variable_names[c] : std::to_string(c);
                throw RenderError("sample '" + sample.id + "': non-finite value at row " + std::to_string(r) +
                                  ", variable '" + name + "'");
            }
        }
    }

    const std::size_t n_vars = w.cols();
    const std::size_t n_steps = w.rows();
    Canvas canvas(style.width, style.panel_height * static_cast<int>(n_vars), style.background);
    const auto ticks = tick_indices(n_steps);

    for (std::size_t v = 0; v < n_vars; ++v) {
        const PanelRect area = panel_plot_area(style, v);
        const Rgb color = style.palette[v % style.palette.size()];

        double lo = w(0, v);
        double hi = w(0, v);
        for (std::size_t r = 1; r < n_steps; ++r) {
            lo = std::min(lo, w(r, v));
            hi = std::max(hi, w(r, v));
        }
        const double range = hi - lo;
        double pad = range * style.y_padding;
        if (range == 0.0) pad = std::max(std::fabs(hi) * style.y_padding, 1.0);
        const double y_lo = lo - pad;
        const double y_hi = hi + pad;
        auto y_position = [&](double value) {
            const double frac = (value - y_lo) / (y_hi - y_lo);
            return area.bottom - static_cast<int>(std::llround(frac * (area.bottom - area.top)));
        };

        if (style.gridlines) {
            for (int k = 0; k <= 4; ++k) {
                canvas.hline(area.left, area.right, area.top + (area.bottom - area.top) * k / 4, style.grid);
            }
            for (auto i : ticks) canvas.vline(x_position(area, i, n_steps), area.top, area.bottom, style.grid);
        }
        canvas.vline(area.left - 1, area.top, area.bottom, style.text);
        canvas.hline(area.left - 1, area.right, area.bottom + 1, style.text);

        const std::string title =
            v < sample.variable_names.size() ? sample.variable_names[v] : "var" + std::to_string(v);
        canvas.text(area.left, area.top - kTitleStrip + 4, title, style.text);

        const auto top_label = short_number(hi);
        const auto bottom_label = short_number(lo);
        canvas.text(area.left - 6 - text_width(top_label), y_position(hi) - 5, top_label, style.text);
        if (range != 0.0) {
            canvas.text(area.left - 6 - text_width(bottom_label), y_position(lo) - 5, bottom_label, style.text);
        }

        if (n_steps == 1) {
            canvas.stamp(x_position(area, 0, 1), y_position(w(0, v)), style.line_width + 2, color);
        } else {
            for (std::size_t r = 1; r < n_steps; ++r) {
                canvas.line(x_position(area, r - 1, n_steps), y_position(w(r - 1, v)), x_position(area, r, n_steps),
                            y_position(w(r, v)), style.line_width, color);
            }
        }

        // Shared time axis: tick labels on the bottom panel.
        if (v + 1 == n_vars && sample.timestamps.size() == n_steps) {
            for (auto i : ticks) {
                const auto label = tick_label(sample.timestamps[i]);
                int x = x_position(area, i, n_steps) - text_width(label) / 2;
                x = std::clamp(x, 0, style.width - text_width(label));
                canvas.text(x, area.bottom + 5, label, style.text);
            }
        }
    }
    return canvas.take();
}

std::vector<std::uint8_t> encode_png(const Raster& raster) {
    std::vector<std::uint8_t> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw RenderError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw RenderError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw RenderError("libpng error while encoding chart");
    }
    png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(raster.width), static_cast<png_uint_32>(raster.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    for (int y = 0; y < raster.height; ++y) {
        auto* row = const_cast<png_bytep>(raster.pixels.data() +
                                          static_cast<std::size_t>(y) * static_cast<std::size_t>(raster.width) * 3);
        png_write_row(png, row);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

ChartImage render_chart(const Sample& sample, const ChartStyle& style) {
    const Raster raster = render_raster(sample, style);
    return {encode_png(raster), raster.width, raster.height, sample.id};
}

std::string encode_for_transport(const ChartImage& image) {
    if (image.png_bytes.empty()) throw PreconditionError("chart '" + image.sample_id + "' has no bytes");
    return base64_encode(image.png_bytes);
}

std::string chart_data_url(const ChartImage& image) {
    return "data:image/png;base64," + encode_for_transport(image);
}

std::filesystem::path save_chart(const ChartImage& image, const std::filesystem::path& dir) {
    const auto path = dir / (image.sample_id + ".png");
    write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(image.png_bytes.data()),
                                             image.png_bytes.size()));
    return path;
}

}  // namespace rationalets
