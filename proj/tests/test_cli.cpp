#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

/// Runs the CLI with `args`; stdout is captured, stderr is folded in when
/// `with_stderr` is set.
Result run(const std::string& args, bool with_stderr = false) {
    const std::string cmd = std::string(CROSSDINO_CLI) + " " + args + (with_stderr ? " 2>&1" : " 2>/dev/null");
    Result r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    std::size_t n = 0;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "crossdino_cli_tests";
    fs::create_directories(dir);
    return dir / name;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

} // namespace

TEST_CASE("clap-plan", "[cli]") {
    auto r = run("clap-plan --width 800 --height 1024 --patch-w 224 --patch-h 224");
    CHECK(r.code == 0);
    CHECK(r.out == "width,height,patch_w,patch_h,n_w,n_h,l_w,l_h,starts_x,starts_y\n"
                   "800,1024,224,224,4,5,38,27,0 186 372 576,0 197 394 591 800\n");

    r = run("clap-plan --width 224 --height 100 --patch-w 224 --patch-h 224");
    CHECK(r.code == 0);
    CHECK(r.out.find("224,100,224,224,1,1,0,0,0,0\n") != std::string::npos);

    r = run("clap-plan --width 40 --height 40 --patch-w 32 --patch-h 32", true);
    CHECK(r.code == 1);
    CHECK(r.out.find("stride") != std::string::npos);

    CHECK(run("clap-plan --width 0 --height 5").code == 1);
    CHECK(run("clap-plan --width -3 --height 5").code == 1);
    CHECK(run("clap-plan --height 5").code == 1);
}

TEST_CASE("cctm-check", "[cli]") {
    auto r = run("cctm-check --seed 3 --count 2 --shape 1,3,5");
    CHECK(r.code == 0);
    CHECK(r.out.rfind("seed,shape,max_rel_err,pass\n3,1x3x5,", 0) == 0);
    CHECK(r.out.find("\n4,1x3x5,") != std::string::npos);
    CHECK(r.out.find("false") == std::string::npos);

    CHECK(run("cctm-check --shape 1,3").code == 1);
    CHECK(run("cctm-check --shape 1,0,3").code == 1);
    CHECK(run("cctm-check --shape a,b,c").code == 1);
}

TEST_CASE("boost-table", "[cli]") {
    const auto r = run("boost-table --image 1024x1024 --sizes 2x2,8x8,80x80 --gamma 0.25 --betas 0.05,0.1,0.25,1.0");
    CHECK(r.code == 0);
    for (const char* line : {"cs_hat,2x2,-,0.0020\n", "weight,2x2,0.05,0.7189\n", "weight,80x80,0.1,0.6888\n",
                             "rd,2x2-8x8,0.05,0.0552\n", "rd,2x2-8x8,base,0.0015\n", "rd,8x8-80x80,0.05,0.1583\n",
                             "amplification,2x2-8x8,0.05,36.8\n", "amplification,8x8-80x80,0.05,8.6\n"}) {
        INFO(line);
        CHECK(r.out.find(line) != std::string::npos);
    }
    CHECK(run("boost-table --betas 0,0.5").code == 1);
    CHECK(run("boost-table --sizes 2x2,0x8").code == 1);
    CHECK(run("boost-table --sizes 2x2x3").code == 1);
    CHECK(run("boost-table --image 1024").code == 1);
}

TEST_CASE("boost-train", "[cli]") {
    const auto a = scratch("train_a.csv"), b = scratch("train_b.csv");
    const std::string args = "boost-train --loss boost --beta 0.05 --seed 42 --epochs 200 --n 5000 --out ";
    REQUIRE(run(args + a.string()).code == 0);
    REQUIRE(run(args + b.string()).code == 0);
    CHECK(slurp(a) == slurp(b));
    CHECK(slurp(a) == slurp(fs::path(CROSSDINO_GOLDEN_DIR) / "boost_seed42.csv"));
    CHECK(slurp(a.string() + ".schema").rfind("loss:string,", 0) == 0);

    const auto focal = scratch("train_focal.csv");
    REQUIRE(run("boost-train --loss focal --seed 42 --epochs 200 --n 5000 --out " + focal.string()).code == 0);
    CHECK(slurp(focal) == slurp(fs::path(CROSSDINO_GOLDEN_DIR) / "focal_seed42.csv"));
}

TEST_CASE("boost-train options", "[cli]") {
    SECTION("config file with command-line override") {
        const auto cfg = scratch("train.cfg");
        write(cfg, "# small run\nloss = focal\nepochs = 3\nn = 40\nseed = 7\n");
        const auto from_file = run("boost-train --config " + cfg.string());
        CHECK(from_file.code == 0);
        CHECK(from_file.out.find("\nfocal,very_tiny,") != std::string::npos);
        const auto direct = run("boost-train --loss focal --epochs 3 --n 40 --seed 7");
        CHECK(from_file.out == direct.out);
        const auto overridden = run("boost-train --config " + cfg.string() + " --loss boost");
        CHECK(overridden.out.find("\nboost,very_tiny,") != std::string::npos);

        write(cfg, "unknown = 1\n");
        CHECK(run("boost-train --config " + cfg.string()).code == 1);
        write(cfg, "just words\n");
        CHECK(run("boost-train --config " + cfg.string()).code == 1);
        CHECK(run("boost-train --config " + scratch("absent.cfg").string()).code == 1);
    }
    SECTION("exit codes") {
        CHECK(run("boost-train --loss hinge").code == 1);
        CHECK(run("boost-train --lr 0 --n 10 --epochs 1").code == 1);
        CHECK(run("boost-train --beta 2 --n 10 --epochs 1").code == 1);
        CHECK(run("boost-train --n 0 --epochs 1").code == 1);
        const auto diverged = run("boost-train --lr 1e300 --n 50 --epochs 5", true);
        CHECK(diverged.code == 2);
        CHECK(diverged.out.find("epoch") != std::string::npos);
    }
}

TEST_CASE("score-stats", "[cli]") {
    const auto in = scratch("results.json"), out = scratch("stats.csv");
    write(in, R"([{"image_id": 1, "category_id": 1, "bbox": [0, 0, 4, 4], "score": 0.5},
                  {"image_id": 1, "category_id": 1, "bbox": [10, 10, 100, 100], "score": 0.9},
                  {"image_id": 2, "category_id": 1, "bbox": [0, 0, 8, 8], "score": 0.3}])");
    auto r = run("score-stats --in " + in.string() + " --threshold 0.4 --edges 0,32 --out " + out.string());
    CHECK(r.code == 0);
    CHECK(slurp(out) == "bucket_lo,bucket_hi,count,mean_score\n"
                        "0.000000,32.000000,1,0.500000\n"
                        "32.000000,inf,1,0.900000\n");
    CHECK(fs::exists(out.string() + ".schema"));

    write(in, R"([{"image_id": 1, "category_id": 1, "bbox": [0, 0, 4], "score": 0.5}])");
    r = run("score-stats --in " + in.string(), true);
    CHECK(r.code == 1);
    CHECK(r.out.find("entry 0") != std::string::npos);
    CHECK(run("score-stats --in " + scratch("missing.json").string()).code == 1);
    CHECK(run("score-stats --in " + in.string() + " --edges 0,32,16").code == 1);
}

TEST_CASE("usage errors", "[cli]") {
    CHECK(run("").code == 1);
    CHECK(run("no-such-command").code == 1);
    CHECK(run("--help").code == 0);
    CHECK(run("clap-plan --help").code == 0);
}
