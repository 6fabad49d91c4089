#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

// Runs the CLI, captures stdout, returns the exit code.
Run cli(const std::string& args) {
    const std::string cmd = std::string(HDM_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    Run r;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Wall-clock times differ between runs by construction; blank the ms column
// before comparing CSVs for byte identity.
std::string zero_ms_column(const std::string& csv) {
    std::istringstream is(csv);
    std::ostringstream os;
    std::string line;
    while (std::getline(is, line)) {
        const std::size_t comma = line.rfind(',');
        os << line.substr(0, comma) << ",ms\n";
    }
    return os.str();
}

struct TmpDir {
    std::string path;
    explicit TmpDir(const std::string& name) : path("/tmp/hdm_cli_" + name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TmpDir() { fs::remove_all(path); }
};

void write_small_config(const std::string& path, int seed) {
    std::ofstream os(path);
    os << "pipeline.input_points = 2048\n"
       << "pipeline.n1 = 256\npipeline.n2 = 128\npipeline.n3 = 64\n"
       << "pipeline.c1 = 16\npipeline.c2 = 32\npipeline.c3 = 64\n"
       << "pipeline.seed = " << seed << "\n";
}

}  // namespace

TEST_CASE("usage errors exit with code 1") {
    CHECK(cli("--help").code == 0);
    CHECK(cli("bogus-subcommand").code == 1);
    CHECK(cli("register only_one_arg").code == 1);
    CHECK(cli("--mode nonsense benchmark --count 1").code == 1);
    CHECK(cli("").code == 1);  // subcommand required
}

TEST_CASE("data errors exit with code 2") {
    CHECK(cli("register /tmp/no_such_src.bin /tmp/no_such_tgt.bin").code == 2);
    TmpDir dir("badcfg");
    std::ofstream(dir.path + "/cfg.txt") << "pipeline.unknown_key = 3\n";
    CHECK(cli("--config " + dir.path + "/cfg.txt benchmark --count 1").code == 2);
}

TEST_CASE("synth then register round trip with ground truth") {
    TmpDir dir("roundtrip");
    write_small_config(dir.path + "/cfg.txt", 5);
    const Run synth = cli("--seed 5 synth --out " + dir.path + " --count 1");
    REQUIRE(synth.code == 0);
    CHECK(fs::exists(dir.path + "/pair0_src.bin"));
    CHECK(fs::exists(dir.path + "/pair0_tgt.bin"));
    CHECK(fs::exists(dir.path + "/pairs.txt"));

    // pairs.txt: header line, then src,tgt,12 pose values.
    std::istringstream pl(slurp(dir.path + "/pairs.txt"));
    std::string header, row;
    std::getline(pl, header);
    std::getline(pl, row);
    std::string field;
    std::istringstream rs(row);
    std::getline(rs, field, ',');  // src path
    std::getline(rs, field, ',');  // tgt path
    std::string pose_line;
    std::getline(rs, pose_line);
    for (char& ch : pose_line)
        if (ch == ',') ch = ' ';
    std::ofstream(dir.path + "/gt.txt") << pose_line << "\n";

    const Run reg = cli("--config " + dir.path + "/cfg.txt register " + dir.path +
                        "/pair0_src.bin " + dir.path + "/pair0_tgt.bin --gt-pose " +
                        dir.path + "/gt.txt --out " + dir.path + "/reg");
    REQUIRE(reg.code == 0);
    CHECK(reg.out.find("\"transform\"") != std::string::npos);
    CHECK(reg.out.find("\"stages\"") != std::string::npos);
    CHECK(reg.out.find("\"rte_m\"") != std::string::npos);
    CHECK(reg.out.find("\"success\": true") != std::string::npos);
    CHECK(fs::exists(dir.path + "/reg/estimated_pose.txt"));
    const std::string corr = slurp(dir.path + "/reg/correspondences.csv");
    CHECK(corr.rfind("src_x,", 0) == 0);

    // eval-only of the estimate against the ground truth agrees.
    const Run ev = cli("eval-only " + dir.path + "/reg/estimated_pose.txt " + dir.path +
                       "/gt.txt");
    CHECK(ev.code == 0);
    CHECK(ev.out.rfind("pair_id,", 0) == 0);
    CHECK(ev.out.find(",1\n") != std::string::npos);  // success flag

    // Length-mismatched pose files are a data error.
    std::ofstream(dir.path + "/two.txt")
        << "1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 0 0 1 0 0 0 0 1 0\n";
    CHECK(cli("eval-only " + dir.path + "/two.txt " + dir.path + "/gt.txt").code == 2);
}

TEST_CASE("benchmark emits its CSVs and is deterministic per seed") {
    TmpDir a("bench_a"), b("bench_b");
    write_small_config(a.path + "/cfg.txt", 11);
    const std::string common = "--config " + a.path + "/cfg.txt benchmark --count 2 --out ";
    REQUIRE(cli(common + a.path).code == 0);
    REQUIRE(cli(common + b.path).code == 0);
    for (const char* name : {"per_pair.csv", "recall_vs_rte.csv", "recall_vs_rre.csv"}) {
        CHECK(fs::exists(a.path + "/" + name));
        CHECK(fs::exists(b.path + "/" + name));
    }
    CHECK(zero_ms_column(slurp(a.path + "/per_pair.csv")) ==
          zero_ms_column(slurp(b.path + "/per_pair.csv")));
    CHECK(slurp(a.path + "/recall_vs_rte.csv") == slurp(b.path + "/recall_vs_rte.csv"));
    CHECK(slurp(a.path + "/recall_vs_rre.csv") == slurp(b.path + "/recall_vs_rre.csv"));

    // Different seed, different per-pair numbers.
    TmpDir c("bench_c");
    write_small_config(c.path + "/cfg.txt", 12);
    REQUIRE(cli("--config " + c.path + "/cfg.txt benchmark --count 2 --out " + c.path).code ==
            0);
    CHECK(zero_ms_column(slurp(a.path + "/per_pair.csv")) !=
          zero_ms_column(slurp(c.path + "/per_pair.csv")));
}

TEST_CASE("ablation flags and subcommand wire through") {
    TmpDir dir("ablate");
    write_small_config(dir.path + "/cfg.txt", 3);
    const Run r = cli("--config " + dir.path + "/cfg.txt ablate --count 1 --out " + dir.path);
    REQUIRE(r.code == 0);
    const std::string csv = slurp(dir.path + "/ablation.csv");
    CHECK(csv.find("full,") != std::string::npos);
    CHECK(csv.find("wo_std,") != std::string::npos);
    CHECK(csv.find("wo_fs,") != std::string::npos);
    CHECK(csv.find("wo_dm_std_fs,") != std::string::npos);
    CHECK(csv.find("wo_mask,") != std::string::npos);

    // The global ablation flags parse and run.
    TmpDir d2("ablate_flags");
    write_small_config(d2.path + "/cfg.txt", 3);
    CHECK(cli("--config " + d2.path + "/cfg.txt --no-double-soft --no-std --no-fs --no-mask "
              "benchmark --count 1 --out " +
              d2.path)
              .code == 0);
}
