#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "rpf/io/image_io.hpp"
#include "rpf/train/trainer.hpp"
#include "test_util.hpp"

using namespace rpf;
using core::Tensor;
using testutil::max_abs_diff;
using testutil::random_tensor;

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("rpf_" + tag + "_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

train::TrainConfig tiny_config(uint64_t seed = 123) {
    train::TrainConfig cfg;
    cfg.model.stages = 1;
    cfg.model.channels = 4;
    cfg.batch = 2;
    cfg.crop = 32;
    cfg.epochs = 2;
    cfg.seed = seed;
    cfg.synthetic = true;
    cfg.synthetic_count = 4;
    cfg.synthetic_size = 32;
    return cfg;
}

}  // namespace

TEST_CASE("ingest pairs same-named files and reports the rest") {
    TempDir tmp("ingest");
    const fs::path ir_dir = tmp.path / "ir", vis_dir = tmp.path / "vis";
    fs::create_directories(ir_dir);
    fs::create_directories(vis_dir);
    core::Rng rng(1);
    for (int i = 0; i < 5; ++i) {
        const std::string name = "img" + std::to_string(i) + ".png";
        io::write_png_gray((ir_dir / name).string(), random_tensor({8, 8}, rng));
        io::write_png_gray((vis_dir / name).string(), random_tensor({8, 8}, rng));
    }
    SUBCASE("five matching names give five pairs") {
        const train::DatasetManifest m = train::ingest(ir_dir.string(), vis_dir.string());
        CHECK(m.pairs.size() == 5);
        CHECK(m.rejects.empty());
    }
    SUBCASE("an extra ir-side file is rejected, not fatal") {
        io::write_png_gray((ir_dir / "extra.png").string(), random_tensor({8, 8}, rng));
        const train::DatasetManifest m = train::ingest(ir_dir.string(), vis_dir.string());
        CHECK(m.pairs.size() == 5);
        REQUIRE(m.rejects.size() == 1);
        CHECK(m.rejects[0].find("extra.png") != std::string::npos);
    }
    SUBCASE("empty directories give an empty manifest") {
        const fs::path empty1 = tmp.path / "e1", empty2 = tmp.path / "e2";
        fs::create_directories(empty1);
        fs::create_directories(empty2);
        const train::DatasetManifest m = train::ingest(empty1.string(), empty2.string());
        CHECK(m.pairs.empty());
    }
    SUBCASE("missing directory throws") {
        CHECK_THROWS_AS(train::ingest((tmp.path / "nope").string(), vis_dir.string()),
                        std::runtime_error);
    }
    SUBCASE("file dataset loads pairs with matching dimensions") {
        const train::FileDataset data(train::ingest(ir_dir.string(), vis_dir.string()));
        const imaging::SourcePair pair = data.load(0);
        CHECK(pair.height() == 8);
        CHECK(pair.vis_rgb.empty());  // grayscale sources
    }
}

TEST_CASE("random crops") {
    const imaging::SourcePair pair = train::make_synthetic_pair(5, 0, 40, 40);
    SUBCASE("crop equal to the image size is the identity") {
        core::Rng rng(2);
        const imaging::SourcePair c = train::augment_crop(pair, 40, rng);
        CHECK(max_abs_diff(c.ir, pair.ir) == 0.0);
        CHECK(max_abs_diff(c.vis_y, pair.vis_y) == 0.0);
    }
    SUBCASE("identical seeds give identical crop sequences") {
        core::Rng a(7), b(7);
        for (int i = 0; i < 10; ++i) {
            const imaging::SourcePair ca = train::augment_crop(pair, 17, a);
            const imaging::SourcePair cb = train::augment_crop(pair, 17, b);
            CHECK(max_abs_diff(ca.ir, cb.ir) == 0.0);
            CHECK(max_abs_diff(ca.vis_y, cb.vis_y) == 0.0);
        }
    }
    SUBCASE("the same window is applied to both modalities") {
        core::Rng rng(9);
        const imaging::SourcePair c = train::augment_crop(pair, 16, rng);
        // find the window by matching the ir plane, then check vis agrees
        bool found = false;
        for (int oy = 0; oy <= 24 && !found; ++oy)
            for (int ox = 0; ox <= 24 && !found; ++ox) {
                bool match = true;
                for (int y = 0; y < 16 && match; ++y)
                    for (int x = 0; x < 16 && match; ++x)
                        if (pair.ir.at(oy + y, ox + x) != c.ir.at(y, x)) match = false;
                if (match) {
                    found = true;
                    for (int y = 0; y < 16; ++y)
                        for (int x = 0; x < 16; ++x)
                            CHECK(pair.vis_y.at(oy + y, ox + x) == c.vis_y.at(y, x));
                }
            }
        CHECK(found);
    }
    SUBCASE("oversized crop is rejected") {
        core::Rng rng(3);
        CHECK_THROWS_AS(train::augment_crop(pair, 64, rng), std::invalid_argument);
    }
    SUBCASE("crop origins are uniform over the valid grid") {
        // 256 -> 128 leaves a 129x129 origin grid; chi-square both marginals
        core::Rng gen(31);
        const Tensor ir = random_tensor({256, 256}, gen);
        const imaging::SourcePair big = imaging::make_source_pair(ir, ir);
        core::Rng rng(101);
        std::vector<int> row_hist(129, 0), col_hist(129, 0);
        const int draws = 10000;
        for (int i = 0; i < draws; ++i) {
            const imaging::SourcePair c = train::augment_crop(big, 128, rng);
            // identify the origin via the first pixel (values are distinct whp)
            bool located = false;
            for (int oy = 0; oy <= 128 && !located; ++oy)
                for (int ox = 0; ox <= 128 && !located; ++ox)
                    if (big.ir.at(oy, ox) == c.ir.at(0, 0) &&
                        big.ir.at(oy, ox + 1) == c.ir.at(0, 1) &&
                        big.ir.at(oy + 1, ox) == c.ir.at(1, 0)) {
                        ++row_hist[static_cast<size_t>(oy)];
                        ++col_hist[static_cast<size_t>(ox)];
                        located = true;
                    }
            REQUIRE(located);
        }
        const double expect = draws / 129.0;
        double chi_rows = 0.0, chi_cols = 0.0;
        for (int i = 0; i < 129; ++i) {
            chi_rows += (row_hist[i] - expect) * (row_hist[i] - expect) / expect;
            chi_cols += (col_hist[i] - expect) * (col_hist[i] - expect) / expect;
        }
        // df = 128; 190 is past the 99.9th percentile
        CHECK(chi_rows < 190.0);
        CHECK(chi_cols < 190.0);
    }
}

TEST_CASE("learning-rate schedule halves every 20 epochs") {
    train::TrainConfig cfg;
    cfg.synthetic = true;
    CHECK(train::lr_at_epoch(cfg, 0) == 1e-3);
    CHECK(train::lr_at_epoch(cfg, 19) == 1e-3);
    CHECK(train::lr_at_epoch(cfg, 20) == 5e-4);
    CHECK(train::lr_at_epoch(cfg, 39) == 5e-4);
    CHECK(train::lr_at_epoch(cfg, 40) == 2.5e-4);
}

TEST_CASE("config binding round-trips and rejects unknown keys") {
    train::TrainConfig cfg = tiny_config();
    cfg.loss.lambda2 = 4.8;
    const io::Config toml = train::train_config_to(cfg);
    const train::TrainConfig back = train::train_config_from(toml);
    CHECK(back.model.stages == cfg.model.stages);
    CHECK(back.loss.lambda2 == cfg.loss.lambda2);
    CHECK(back.synthetic_count == cfg.synthetic_count);

    CHECK(train::canonical_config_key("lambda2") == "loss.lambda2");
    CHECK_THROWS_AS(train::canonical_config_key("bogus_key"), std::runtime_error);

    io::Config bad = toml;
    bad.set("train.nonsense", "1");
    CHECK_THROWS_AS(train::train_config_from(bad), std::runtime_error);
}

TEST_CASE("a short training run logs finite losses and a loadable checkpoint") {
    TempDir tmp("train");
    train::TrainConfig cfg = tiny_config();
    cfg.epochs = 1;
    train::Trainer trainer(cfg);
    const train::TrainResult result = trainer.train(tmp.path.string());
    CHECK(!result.aborted);
    CHECK(result.history.size() == 2);  // 4 pairs / batch 2
    for (const auto& b : result.history) {
        CHECK(std::isfinite(b.l_total));
        CHECK(b.l_total == doctest::Approx(b.l_ss + b.l_f).epsilon(1e-12));
    }
    CHECK(fs::exists(tmp.path / "loss_log.csv"));
    CHECK(fs::exists(tmp.path / "last.ckpt"));
    net::RpfNet model = net::load_model((tmp.path / "last.ckpt").string());
    CHECK(model.config().channels == 4);

    // validation produces a finite aggregate over the training pairs
    auto data = train::open_dataset(cfg);
    const train::ValidationResult val = train::validate(model, *data);
    CHECK(val.per_image.size() == 4);
    for (double v : val.aggregate.as_row()) CHECK(std::isfinite(v));
}

TEST_CASE("training is deterministic under a fixed seed") {
    TempDir tmp("det");
    train::TrainConfig cfg = tiny_config(77);
    cfg.epochs = 1;
    train::Trainer a(cfg), b(cfg);
    const train::TrainResult ra = a.train((tmp.path / "a").string());
    const train::TrainResult rb = b.train((tmp.path / "b").string());
    REQUIRE(ra.history.size() == rb.history.size());
    for (size_t i = 0; i < ra.history.size(); ++i) {
        CHECK(ra.history[i].l_total == rb.history[i].l_total);
        CHECK(ra.history[i].l_c == rb.history[i].l_c);
        CHECK(ra.history[i].l_s == rb.history[i].l_s);
    }
    std::ifstream fa(tmp.path / "a" / "loss_log.csv"), fb(tmp.path / "b" / "loss_log.csv");
    const std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    const std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(ca == cb);
}

TEST_CASE("resuming from a checkpoint reproduces the next epoch bit-for-bit") {
    TempDir tmp("resume");
    train::TrainConfig cfg = tiny_config(321);
    cfg.epochs = 2;

    train::Trainer full(cfg);
    const train::TrainResult r_full = full.train((tmp.path / "full").string());
    REQUIRE(r_full.history.size() == 4);

    train::TrainConfig first_half = cfg;
    first_half.epochs = 1;
    train::Trainer half(first_half);
    const train::TrainResult r_half = half.train((tmp.path / "half").string());
    REQUIRE(r_half.history.size() == 2);

    train::Trainer resumed(cfg);
    resumed.resume((tmp.path / "half" / "last.ckpt").string());
    const train::TrainResult r_rest = resumed.train((tmp.path / "rest").string());
    REQUIRE(r_rest.history.size() == 2);

    for (size_t i = 0; i < 2; ++i) {
        CHECK(r_rest.history[i].l_total == r_full.history[2 + i].l_total);
        CHECK(r_rest.history[i].l_grad == r_full.history[2 + i].l_grad);
        CHECK(r_rest.history[i].l_c == r_full.history[2 + i].l_c);
    }
}

TEST_CASE("ablation cases mutate the config as named") {
    train::TrainConfig cfg = tiny_config();
    SUBCASE("every published case is accepted") {
        for (const auto& name : train::ablation_case_names()) {
            train::TrainConfig c = cfg;
            CHECK_NOTHROW(train::apply_ablation_case(c, name));
        }
        CHECK(train::ablation_case_names().size() == 8);
    }
    SUBCASE("specific effects") {
        train::TrainConfig c = cfg;
        train::apply_ablation_case(c, "no_cpm");
        CHECK(!c.model.use_cpm);
        c = cfg;
        train::apply_ablation_case(c, "fdfm_to_transformer");
        CHECK(c.model.fdfm_mode == net::FdfmMode::TransformerSub);
        c = cfg;
        train::apply_ablation_case(c, "no_res_prior");
        CHECK(!c.model.use_residual_branch);
        CHECK(!c.loss.use_saliency);
    }
    SUBCASE("unknown names are rejected with the valid list") {
        train::TrainConfig c = cfg;
        try {
            train::apply_ablation_case(c, "bogus");
            FAIL("expected a rejection");
        } catch (const std::invalid_argument& e) {
            CHECK(std::string(e.what()).find("no_cpm") != std::string::npos);
        }
    }
}

TEST_CASE("sweep report carries a rank-of-ranks column") {
    std::vector<metrics::MetricReport> rows(3);
    rows[0] = {7.4, 6.2, 10.7, 0.64, 1.73, 0.67};
    rows[1] = {7.3, 6.0, 10.5, 0.62, 1.70, 0.65};
    rows[2] = {7.5, 6.4, 10.9, 0.66, 1.75, 0.69};
    const train::SweepReport rep = train::make_sweep_report({"a", "b", "c"}, rows);
    CHECK(rep.ror == std::vector<double>{2, 3, 1});
}
