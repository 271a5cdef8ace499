// Command-line entry points: train, fuse, eval, psd, ablate.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "rpf/io/image_io.hpp"
#include "rpf/io/plot.hpp"
#include "rpf/metrics/metrics.hpp"
#include "rpf/net/checkpoint.hpp"
#include "rpf/train/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rpf;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out_dir;
    int64_t seed = -1;
    std::string device = "cpu";
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "TOML config file");
    cmd->add_option("--set", o.sets, "KEY=VALUE override (repeatable)");
    cmd->add_option("--out", o.out_dir, "output directory")->required();
    cmd->add_option("--seed", o.seed, "random seed (overrides config)");
    cmd->add_option("--device", o.device, "cpu or gpu")
        ->check(CLI::IsMember({"cpu", "gpu"}));
}

io::Config load_merged(const CommonOpts& o) {
    io::Config merged;
    if (!o.config_path.empty()) {
        const io::Config file = io::Config::parse_file(o.config_path);
        for (const auto& [key, value] : file.items())
            merged.set(train::canonical_config_key(key), value);
    }
    for (const auto& kv : o.sets) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("--set expects KEY=VALUE, got '" + kv + "'");
        merged.set(train::canonical_config_key(kv.substr(0, eq)), kv.substr(eq + 1));
    }
    if (o.seed >= 0) merged.set_int("train.seed", o.seed);
    return merged;
}

void prepare_out(const CommonOpts& o, const io::Config& merged, const train::TrainConfig& cfg) {
    fs::create_directories(o.out_dir);
    if (o.device == "gpu")
        std::cerr << "note: no gpu backend in this build, running on cpu\n";
    // echo the fully resolved config for provenance
    io::Config echo = train::train_config_to(cfg);
    for (const auto& [key, value] : merged.items())
        if (!echo.has(key)) echo.set(key, value);
    echo.write_file((fs::path(o.out_dir) / "config.toml").string());
}

struct PairSource {
    std::vector<std::string> names;
    std::shared_ptr<train::Dataset> data;
};

PairSource open_pairs(const train::TrainConfig& cfg) {
    PairSource src;
    if (cfg.synthetic) {
        src.data = std::make_shared<train::SyntheticDataset>(
            cfg.synthetic_count, cfg.synthetic_size, cfg.synthetic_size, cfg.seed);
        for (size_t i = 0; i < src.data->size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "synthetic_%04zu", i);
            src.names.push_back(name);
        }
    } else {
        auto file_data = std::make_shared<train::FileDataset>(train::ingest(cfg.ir_dir, cfg.vis_dir));
        for (const auto& entry : file_data->manifest().pairs)
            src.names.push_back(fs::path(entry.ir_path).stem().string());
        src.data = file_data;
    }
    return src;
}

void write_rejects(const std::string& out_dir, const train::TrainConfig& cfg) {
    if (cfg.synthetic) return;
    const train::DatasetManifest manifest = train::ingest(cfg.ir_dir, cfg.vis_dir);
    if (manifest.rejects.empty()) return;
    std::ofstream os(fs::path(out_dir) / "rejects.txt");
    for (const auto& r : manifest.rejects) os << r << "\n";
    std::cerr << "warning: " << manifest.rejects.size() << " unpaired files (see rejects.txt)\n";
}

int cmd_train(const CommonOpts& o) {
    const io::Config merged = load_merged(o);
    train::TrainConfig cfg = train::train_config_from(merged);
    cfg.validate();
    train::Trainer trainer(cfg);  // validates the dataset before any output exists
    prepare_out(o, merged, cfg);
    write_rejects(o.out_dir, cfg);
    const train::TrainResult result = trainer.train(o.out_dir);
    if (result.aborted) {
        std::cerr << "training aborted: " << result.abort_reason << "\n";
        if (!result.last_checkpoint.empty())
            std::cerr << "last good checkpoint: " << result.last_checkpoint << "\n";
        return 1;
    }
    std::cout << "trained " << result.history.size() << " steps; checkpoint: "
              << result.last_checkpoint << "\n";
    return 0;
}

int cmd_fuse(const CommonOpts& o) {
    const io::Config merged = load_merged(o);
    train::TrainConfig cfg = train::train_config_from(merged);
    const std::string ckpt_path = merged.get_string("fuse.checkpoint");
    if (ckpt_path.empty()) throw std::runtime_error("fuse requires fuse.checkpoint");
    net::RpfNet model = net::load_model(ckpt_path);
    const PairSource src = open_pairs(cfg);
    prepare_out(o, merged, cfg);

    for (size_t i = 0; i < src.names.size(); ++i) {
        const imaging::SourcePair pair = src.data->load(i);
        const net::FusedOutput fused = model.fuse(pair);
        const std::string path = (fs::path(o.out_dir) / (src.names[i] + ".png")).string();
        if (fused.fused_rgb.empty())
            io::write_png_gray(path, fused.fused_y);  // grayscale-pair mode
        else
            io::write_png_rgb(path, fused.fused_rgb);
    }
    std::cout << "fused " << src.names.size() << " pairs into " << o.out_dir << "\n";
    return 0;
}

int cmd_eval(const CommonOpts& o) {
    const io::Config merged = load_merged(o);
    train::TrainConfig cfg = train::train_config_from(merged);
    std::string ckpt_path = merged.get_string("eval.checkpoint");
    if (ckpt_path.empty()) ckpt_path = merged.get_string("fuse.checkpoint");
    if (ckpt_path.empty()) throw std::runtime_error("eval requires eval.checkpoint");
    net::RpfNet model = net::load_model(ckpt_path);
    const PairSource src = open_pairs(cfg);
    prepare_out(o, merged, cfg);

    std::ofstream csv(fs::path(o.out_dir) / "per_image.csv");
    csv << "name,EN,SF,SD,CC,SCD,VIF\n";
    metrics::MetricReport agg;
    for (size_t i = 0; i < src.names.size(); ++i) {
        const imaging::SourcePair pair = src.data->load(i);
        const net::FusedOutput fused = model.fuse(pair);
        const metrics::MetricReport r = metrics::evaluate(fused.fused_y, pair.ir, pair.vis_y);
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", src.names[i].c_str(),
                      r.en, r.sf, r.sd, r.cc, r.scd, r.vif);
        csv << buf;
        agg.en += r.en;
        agg.sf += r.sf;
        agg.sd += r.sd;
        agg.cc += r.cc;
        agg.scd += r.scd;
        agg.vif += r.vif;
    }
    const size_t count = src.names.size();
    const double inv = count == 0 ? 0.0 : 1.0 / static_cast<double>(count);
    json aggregate = {{"count", count},
                      {"EN", agg.en * inv},
                      {"SF", agg.sf * inv},
                      {"SD", agg.sd * inv},
                      {"CC", agg.cc * inv},
                      {"SCD", agg.scd * inv},
                      {"VIF", agg.vif * inv}};
    std::ofstream(fs::path(o.out_dir) / "aggregate.json") << aggregate.dump(2) << "\n";
    std::cout << "evaluated " << count << " pairs\n";
    return 0;
}

int cmd_psd(const CommonOpts& o, const std::string& images, const std::string& ir_dir,
            const std::string& vis_dir) {
    const io::Config merged = load_merged(o);
    train::TrainConfig cfg = train::train_config_from(merged);
    (void)cfg;
    const std::string images_path = !images.empty() ? images : merged.get_string("psd.images");
    if (images_path.empty()) throw std::runtime_error("psd requires --images");
    fs::create_directories(o.out_dir);
    io::Config echo = merged;
    echo.set_string("psd.images", images_path);
    echo.write_file((fs::path(o.out_dir) / "config.toml").string());

    auto is_image = [](const fs::path& p) {
        std::string ext = p.extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
    };
    std::vector<std::string> files;
    if (fs::is_directory(images_path)) {
        for (const auto& e : fs::directory_iterator(images_path))
            if (e.is_regular_file() && is_image(e.path())) files.push_back(e.path().string());
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(images_path);
    }
    if (files.empty()) throw std::runtime_error("psd: no images found in " + images_path);

    auto to_gray = [](const io::ImageData& img) {
        return img.channels == 1 ? img.pixels : imaging::rgb_to_ycbcr(img.pixels).y;
    };

    json summary = json::array();
    for (const auto& file : files) {
        const std::string stem = fs::path(file).stem().string();
        const core::Tensor img = to_gray(io::read_image(file));
        const metrics::PsdReport rep = metrics::psd_analyze(img);

        std::ofstream csv(fs::path(o.out_dir) / (stem + "_psd_radial.csv"));
        csv << "radius,power\n";
        char buf[64];
        for (size_t r = 0; r < rep.radial_profile.size(); ++r) {
            std::snprintf(buf, sizeof(buf), "%zu,%.12g\n", r, rep.radial_profile[r]);
            csv << buf;
        }
        io::render_line_plot((fs::path(o.out_dir) / (stem + "_psd.png")).string(),
                             {{stem, rep.radial_profile}}, /*log_y=*/true);

        json entry = {{"image", stem}, {"spectral_entropy_bits", rep.spectral_entropy}};
        if (!ir_dir.empty() && !vis_dir.empty()) {
            const std::string base = fs::path(file).filename().string();
            const fs::path irp = fs::path(ir_dir) / base;
            const fs::path visp = fs::path(vis_dir) / base;
            if (fs::exists(irp) && fs::exists(visp)) {
                const core::Tensor ir = to_gray(io::read_image(irp.string()));
                const core::Tensor vis = to_gray(io::read_image(visp.string()));
                const auto [fi, fv] = metrics::psd_fidelity(img, ir, vis);
                entry["ir_fidelity"] = fi;
                entry["vis_fidelity"] = fv;
            }
        }
        summary.push_back(entry);
    }
    std::ofstream(fs::path(o.out_dir) / "psd_summary.json") << summary.dump(2) << "\n";
    std::cout << "analyzed " << files.size() << " images\n";
    return 0;
}

int cmd_ablate(const CommonOpts& o, const std::vector<std::string>& case_args) {
    const io::Config merged = load_merged(o);
    train::TrainConfig base_cfg = train::train_config_from(merged);
    base_cfg.validate();

    std::vector<std::string> cases = case_args;
    if (cases.empty() && merged.has("ablate.cases")) {
        std::stringstream ss(merged.get_string("ablate.cases"));
        std::string tok;
        while (std::getline(ss, tok, ','))
            if (!tok.empty()) cases.push_back(tok);
    }
    // validate the names before any training starts
    for (const auto& name : cases) {
        train::TrainConfig probe = base_cfg;
        train::apply_ablation_case(probe, name);
    }
    prepare_out(o, merged, base_cfg);

    std::vector<std::string> labels;
    std::vector<metrics::MetricReport> rows;
    auto run_case = [&](const std::string& label, const train::TrainConfig& case_cfg) {
        const std::string case_dir = (fs::path(o.out_dir) / label).string();
        train::Trainer trainer(case_cfg);
        const train::TrainResult result = trainer.train(case_dir);
        if (result.aborted)
            throw std::runtime_error("case " + label + " aborted: " + result.abort_reason);
        auto data = train::open_dataset(case_cfg);
        const train::ValidationResult val = train::validate(trainer.model(), *data);
        labels.push_back(label);
        rows.push_back(val.aggregate);
    };

    run_case("baseline", base_cfg);
    for (const auto& name : cases) {
        train::TrainConfig case_cfg = base_cfg;
        train::apply_ablation_case(case_cfg, name);
        run_case(name, case_cfg);
    }

    const train::SweepReport report = train::make_sweep_report(labels, rows);
    std::ofstream csv(fs::path(o.out_dir) / "ablation.csv");
    csv << "case,EN,SF,SD,CC,SCD,VIF,RoR\n";
    json jrows = json::array();
    for (size_t i = 0; i < report.labels.size(); ++i) {
        const auto& r = report.rows[i];
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%g\n",
                      report.labels[i].c_str(), r.en, r.sf, r.sd, r.cc, r.scd, r.vif,
                      report.ror[i]);
        csv << buf;
        jrows.push_back({{"case", report.labels[i]},
                         {"EN", r.en},
                         {"SF", r.sf},
                         {"SD", r.sd},
                         {"CC", r.cc},
                         {"SCD", r.scd},
                         {"VIF", r.vif},
                         {"RoR", report.ror[i]}});
    }
    std::ofstream(fs::path(o.out_dir) / "ablation.json") << jrows.dump(2) << "\n";
    std::cout << "ablation grid written for " << report.labels.size() << " cases\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"residual-prior frequency-aware infrared/visible image fusion"};
    app.require_subcommand(1);

    CommonOpts train_o, fuse_o, eval_o, psd_o, ablate_o;
    std::string fuse_ckpt, eval_ckpt, psd_images, psd_ir, psd_vis;
    std::vector<std::string> ablate_cases;

    CLI::App* train_cmd = app.add_subcommand("train", "train a model");
    add_common(train_cmd, train_o);

    CLI::App* fuse_cmd = app.add_subcommand("fuse", "fuse image pairs with a checkpoint");
    add_common(fuse_cmd, fuse_o);
    fuse_cmd->add_option("--checkpoint", fuse_ckpt, "model checkpoint");
    CLI::App* eval_cmd = app.add_subcommand("eval", "fuse and score image pairs");
    add_common(eval_cmd, eval_o);
    eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint");

    CLI::App* psd_cmd = app.add_subcommand("psd", "power spectral density analysis");
    add_common(psd_cmd, psd_o);
    psd_cmd->add_option("--images", psd_images, "image file or directory");
    psd_cmd->add_option("--ir", psd_ir, "infrared sources for fidelity");
    psd_cmd->add_option("--vis", psd_vis, "visible sources for fidelity");

    CLI::App* ablate_cmd = app.add_subcommand("ablate", "run ablation cases");
    add_common(ablate_cmd, ablate_o);
    ablate_cmd->add_option("--cases", ablate_cases, "case names (default: all eight)");
    bool list_cases = false;
    ablate_cmd->add_flag("--list-cases", list_cases, "print valid case names and exit");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) return cmd_train(train_o);
        if (fuse_cmd->parsed()) {
            if (!fuse_ckpt.empty()) fuse_o.sets.push_back("fuse.checkpoint=" + fuse_ckpt);
            return cmd_fuse(fuse_o);
        }
        if (eval_cmd->parsed()) {
            if (!eval_ckpt.empty()) eval_o.sets.push_back("eval.checkpoint=" + eval_ckpt);
            return cmd_eval(eval_o);
        }
        if (psd_cmd->parsed()) return cmd_psd(psd_o, psd_images, psd_ir, psd_vis);
        if (ablate_cmd->parsed()) {
            if (list_cases) {
                for (const auto& c : train::ablation_case_names()) std::cout << c << "\n";
                return 0;
            }
            return cmd_ablate(ablate_o, ablate_cases);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
