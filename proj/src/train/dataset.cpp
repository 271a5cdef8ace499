#include "rpf/train/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <stdexcept>

#include "rpf/io/image_io.hpp"

namespace rpf::train {

namespace fs = std::filesystem;
using core::Tensor;

namespace {

bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::map<std::string, std::string> list_images(const std::string& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
    std::map<std::string, std::string> out;  // filename -> full path, sorted
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && is_image_file(entry.path()))
            out[entry.path().filename().string()] = entry.path().string();
    return out;
}

Tensor to_gray(const io::ImageData& img) {
    if (img.channels == 1) return img.pixels;
    return imaging::rgb_to_ycbcr(img.pixels).y;
}

}  // namespace

DatasetManifest ingest(const std::string& dir_ir, const std::string& dir_vis) {
    const auto ir_files = list_images(dir_ir);
    const auto vis_files = list_images(dir_vis);
    DatasetManifest manifest;
    for (const auto& [name, path] : ir_files) {
        auto it = vis_files.find(name);
        if (it != vis_files.end())
            manifest.pairs.push_back({path, it->second});
        else
            manifest.rejects.push_back("ir-only: " + name);
    }
    for (const auto& [name, path] : vis_files)
        if (!ir_files.count(name)) manifest.rejects.push_back("vis-only: " + name);
    return manifest;
}

SourcePair FileDataset::load(size_t index) const {
    const ManifestEntry& e = manifest_.pairs.at(index);
    io::ImageData ir = io::read_image(e.ir_path);
    io::ImageData vis = io::read_image(e.vis_path);
    if (ir.height() != vis.height() || ir.width() != vis.width())
        throw std::runtime_error("pair dimensions differ: " + e.ir_path + " vs " + e.vis_path);
    return imaging::make_source_pair(to_gray(ir), vis.pixels);
}

SourcePair make_synthetic_pair(uint64_t seed, int index, int h, int w) {
    core::Rng rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<uint64_t>(index) + 1);

    // infrared: dim background plus a few hot gaussian blobs
    Tensor ir({h, w});
    const double base = 0.1 + 0.1 * rng.uniform();
    ir.fill(base);
    const int blobs = rng.uniform_int(2, 4);
    for (int b = 0; b < blobs; ++b) {
        const double cy = rng.uniform(0.15, 0.85) * h;
        const double cx = rng.uniform(0.15, 0.85) * w;
        const double sig = rng.uniform(0.04, 0.12) * std::min(h, w);
        const double amp = rng.uniform(0.5, 0.85);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                ir.at(y, x) += amp * std::exp(-d2 / (2.0 * sig * sig));
            }
    }
    for (int64_t i = 0; i < ir.numel(); ++i)
        ir[i] = std::clamp(ir[i] + rng.normal(0.0, 0.01), 0.0, 1.0);

    // visible: oriented gratings plus a checker patch and a soft gradient
    Tensor lum({h, w});
    const int waves = rng.uniform_int(2, 3);
    std::vector<double> fy(static_cast<size_t>(waves)), fx(static_cast<size_t>(waves)),
        ph(static_cast<size_t>(waves)), am(static_cast<size_t>(waves));
    for (int k = 0; k < waves; ++k) {
        const double theta = rng.uniform(0.0, 3.14159265);
        const double freq = rng.uniform(2.0, 9.0);
        fy[static_cast<size_t>(k)] = freq * std::sin(theta) / h;
        fx[static_cast<size_t>(k)] = freq * std::cos(theta) / w;
        ph[static_cast<size_t>(k)] = rng.uniform(0.0, 6.28318);
        am[static_cast<size_t>(k)] = rng.uniform(0.08, 0.2);
    }
    const int cs = rng.uniform_int(6, 12);  // checker cell size
    const double gx = rng.uniform(-0.25, 0.25), gy = rng.uniform(-0.25, 0.25);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double v = 0.45 + gx * (double(x) / w - 0.5) + gy * (double(y) / h - 0.5);
            for (int k = 0; k < waves; ++k)
                v += am[static_cast<size_t>(k)] *
                     std::sin(2.0 * 3.14159265 * (fy[static_cast<size_t>(k)] * y +
                                                  fx[static_cast<size_t>(k)] * x) +
                              ph[static_cast<size_t>(k)]);
            if (((y / cs) + (x / cs)) % 2 == 0) v += 0.08;
            lum.at(y, x) = v;
        }
    for (int64_t i = 0; i < lum.numel(); ++i)
        lum[i] = std::clamp(lum[i] + rng.normal(0.0, 0.01), 0.0, 1.0);

    // mild per-channel tint around the luminance pattern
    const double tr = rng.uniform(0.9, 1.1), tg = rng.uniform(0.9, 1.1), tb = rng.uniform(0.9, 1.1);
    Tensor rgb({3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            rgb.at(0, y, x) = std::clamp(lum.at(y, x) * tr, 0.0, 1.0);
            rgb.at(1, y, x) = std::clamp(lum.at(y, x) * tg, 0.0, 1.0);
            rgb.at(2, y, x) = std::clamp(lum.at(y, x) * tb, 0.0, 1.0);
        }
    return imaging::make_source_pair(std::move(ir), std::move(rgb));
}

SourcePair SyntheticDataset::load(size_t index) const {
    return make_synthetic_pair(seed_, static_cast<int>(index), h_, w_);
}

SourcePair augment_crop(const SourcePair& pair, int crop, core::Rng& rng) {
    const int h = pair.height(), w = pair.width();
    if (crop > h || crop > w)
        throw std::invalid_argument("augment_crop: crop larger than image");
    const int oy = crop == h ? 0 : rng.uniform_int(0, h - crop);
    const int ox = crop == w ? 0 : rng.uniform_int(0, w - crop);

    auto window = [&](const Tensor& t) {
        if (t.empty()) return Tensor();
        if (t.rank() == 2) {
            Tensor out({crop, crop});
            for (int y = 0; y < crop; ++y)
                for (int x = 0; x < crop; ++x) out.at(y, x) = t.at(oy + y, ox + x);
            return out;
        }
        Tensor out({t.dim(0), crop, crop});
        for (int c = 0; c < t.dim(0); ++c)
            for (int y = 0; y < crop; ++y)
                for (int x = 0; x < crop; ++x) out.at(c, y, x) = t.at(c, oy + y, ox + x);
        return out;
    };

    SourcePair out;
    out.ir = window(pair.ir);
    out.vis_rgb = window(pair.vis_rgb);
    out.vis_y = window(pair.vis_y);
    out.vis_cb = window(pair.vis_cb);
    out.vis_cr = window(pair.vis_cr);
    return out;
}

}  // namespace rpf::train
