#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rationalets/data.hpp"

namespace rationalets {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct ChartStyle {
    int width = 1200;
    int panel_height = 150;  // canvas height = panel_height * N
    int line_width = 2;
    double y_padding = 0.05;
    bool gridlines = true;
    Rgb background{255, 255, 255};
    Rgb grid{225, 225, 225};
    Rgb text{20, 20, 20};
    // Variable i uses palette[i % size].
    std::vector<Rgb> palette{{31, 119, 180}, {255, 127, 14}, {44, 160, 44},  {214, 39, 40},  {148, 103, 189},
                             {140, 86, 75},  {227, 119, 194}, {127, 127, 127}, {188, 189, 34}, {23, 190, 207}};
};

// RGB8 pixel buffer, row-major.
struct Raster {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    Rgb at(int x, int y) const {
        const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3;
        return {pixels[i], pixels[i + 1], pixels[i + 2]};
    }
};

struct ChartImage {
    std::vector<std::uint8_t> png_bytes;
    int width = 0;
    int height = 0;
    std::string sample_id;
};

// Plot-area geometry of panel `index`, exposed for pixel-level tests.
struct PanelRect {
    int left, top, right, bottom;  // inclusive bounds of the plot area
};
PanelRect panel_plot_area(const ChartStyle& style, std::size_t index);

// One stacked panel per variable sharing the time axis. Throws RenderError
// on an empty window or a non-finite cell.
Raster render_raster(const Sample& sample, const ChartStyle& style = {});
std::vector<std::uint8_t> encode_png(const Raster& raster);
ChartImage render_chart(const Sample& sample, const ChartStyle& style = {});

// Base64 payload of the PNG bytes; throws PreconditionError on empty bytes.
std::string encode_for_transport(const ChartImage& image);
// "data:image/png;base64,<payload>"
std::string chart_data_url(const ChartImage& image);

// Writes `<dir>/<sample_id>.png`.
std::filesystem::path save_chart(const ChartImage& image, const std::filesystem::path& dir);

}  // namespace rationalets
