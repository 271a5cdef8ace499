#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "rpf/io/image_io.hpp"
#include "test_util.hpp"

using namespace rpf;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code = -1;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

RunResult run_cli(const std::string& args) {
    static int counter = 0;
    const fs::path base = fs::temp_directory_path() / ("rpf_cli_io_" + std::to_string(::getpid()) +
                                                       "_" + std::to_string(counter++));
    const fs::path out = base.string() + ".out", err = base.string() + ".err";
    const std::string cmd = std::string(RPF_CLI_BIN) + " " + args + " >" + out.string() + " 2>" +
                            err.string();
    const int raw = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    fs::remove(out);
    fs::remove(err);
    return r;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("rpf_cli_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

const std::string kTinyTrainArgs =
    " --set data.synthetic=true --set data.synthetic_count=4 --set data.synthetic_size=32"
    " --set train.crop=32 --set train.batch=2 --set train.epochs=1"
    " --set model.channels=8 --set model.stages=1 --seed 5";

}  // namespace

TEST_CASE("train/fuse/eval/psd round trip on synthetic data") {
    TempDir tmp("pipeline");
    const fs::path train_dir = tmp.path / "train";

    const RunResult train = run_cli("train --out " + train_dir.string() + kTinyTrainArgs);
    INFO(train.err);
    REQUIRE(train.code == 0);
    CHECK(fs::exists(train_dir / "config.toml"));
    CHECK(fs::exists(train_dir / "loss_log.csv"));
    REQUIRE(fs::exists(train_dir / "last.ckpt"));

    const std::string ckpt = (train_dir / "last.ckpt").string();
    const fs::path fuse1 = tmp.path / "fuse1", fuse2 = tmp.path / "fuse2";
    const std::string fuse_args = " --checkpoint " + ckpt + kTinyTrainArgs;
    const RunResult f1 = run_cli("fuse --out " + fuse1.string() + fuse_args);
    INFO(f1.err);
    REQUIRE(f1.code == 0);
    for (int i = 0; i < 4; ++i) {
        char name[40];
        std::snprintf(name, sizeof(name), "synthetic_%04d.png", i);
        CHECK(fs::exists(fuse1 / name));
    }

    SUBCASE("fuse is byte-idempotent") {
        const RunResult f2 = run_cli("fuse --out " + fuse2.string() + fuse_args);
        REQUIRE(f2.code == 0);
        for (int i = 0; i < 4; ++i) {
            char name[40];
            std::snprintf(name, sizeof(name), "synthetic_%04d.png", i);
            CHECK(slurp(fuse1 / name) == slurp(fuse2 / name));
        }
    }

    SUBCASE("fused outputs preserve dimensions and are color") {
        const io::ImageData img = io::read_image((fuse1 / "synthetic_0000.png").string());
        CHECK(img.channels == 3);
        CHECK(img.height() == 32);
        CHECK(img.width() == 32);
    }

    SUBCASE("eval emits the per-image CSV and aggregate JSON") {
        const fs::path eval_dir = tmp.path / "eval";
        const RunResult ev = run_cli("eval --out " + eval_dir.string() + " --checkpoint " + ckpt +
                                     kTinyTrainArgs);
        INFO(ev.err);
        REQUIRE(ev.code == 0);
        const std::string csv = slurp(eval_dir / "per_image.csv");
        CHECK(csv.find("name,EN,SF,SD,CC,SCD,VIF") == 0);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);  // header + 4 rows
        const std::string agg = slurp(eval_dir / "aggregate.json");
        CHECK(agg.find("\"EN\"") != std::string::npos);
    }

    SUBCASE("psd analyzes fused outputs") {
        const fs::path psd_dir = tmp.path / "psd";
        const RunResult ps = run_cli("psd --out " + psd_dir.string() + " --images " +
                                     fuse1.string());
        INFO(ps.err);
        REQUIRE(ps.code == 0);
        CHECK(fs::exists(psd_dir / "synthetic_0000_psd_radial.csv"));
        CHECK(fs::exists(psd_dir / "synthetic_0000_psd.png"));
        CHECK(fs::exists(psd_dir / "psd_summary.json"));
    }
}

TEST_CASE("grayscale pairs fuse to single-channel output") {
    TempDir tmp("gray");
    const fs::path ir_dir = tmp.path / "ir", vis_dir = tmp.path / "vis";
    fs::create_directories(ir_dir);
    fs::create_directories(vis_dir);
    core::Rng rng(3);
    for (int i = 0; i < 2; ++i) {
        const std::string name = "m" + std::to_string(i) + ".png";
        io::write_png_gray((ir_dir / name).string(), testutil::random_tensor({24, 24}, rng));
        io::write_png_gray((vis_dir / name).string(), testutil::random_tensor({24, 24}, rng));
    }

    const fs::path train_dir = tmp.path / "train";
    const RunResult train = run_cli("train --out " + train_dir.string() + kTinyTrainArgs);
    REQUIRE(train.code == 0);

    const fs::path fuse_dir = tmp.path / "fused";
    const RunResult fuse = run_cli(
        "fuse --out " + fuse_dir.string() + " --checkpoint " + (train_dir / "last.ckpt").string() +
        " --set data.synthetic=false --set data.ir_dir=" + ir_dir.string() +
        " --set data.vis_dir=" + vis_dir.string());
    INFO(fuse.err);
    REQUIRE(fuse.code == 0);
    const io::ImageData img = io::read_image((fuse_dir / "m0.png").string());
    CHECK(img.channels == 1);
    CHECK(img.height() == 24);
}

TEST_CASE("bad config keys fail fast with the key name") {
    TempDir tmp("badkey");
    const RunResult r = run_cli("train --out " + (tmp.path / "o").string() +
                                " --set definitely_wrong=1" + kTinyTrainArgs);
    CHECK(r.code != 0);
    CHECK(r.err.find("definitely_wrong") != std::string::npos);
}

TEST_CASE("missing dataset directory exits nonzero without partial outputs") {
    TempDir tmp("nodata");
    const fs::path out = tmp.path / "out";
    const RunResult r = run_cli("train --out " + out.string() +
                                " --set data.synthetic=false --set data.ir_dir=/nope/ir"
                                " --set data.vis_dir=/nope/vis --set train.epochs=1");
    CHECK(r.code != 0);
    CHECK(!fs::exists(out / "config.toml"));
}

TEST_CASE("unknown ablation case lists the valid names") {
    TempDir tmp("ablbad");
    const RunResult r = run_cli("ablate --out " + (tmp.path / "o").string() +
                                " --cases bogus_case" + kTinyTrainArgs);
    CHECK(r.code != 0);
    CHECK(r.err.find("bogus_case") != std::string::npos);
    CHECK(r.err.find("fdfm_to_transformer") != std::string::npos);
}

TEST_CASE("gpu device request falls back to cpu with a note") {
    TempDir tmp("gpu");
    const RunResult r = run_cli("train --out " + (tmp.path / "o").string() + " --device gpu" +
                                " --set train.max_steps=1" + kTinyTrainArgs);
    CHECK(r.code == 0);
    CHECK(r.err.find("cpu") != std::string::npos);
}
