#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <string>

#include <sys/wait.h>

#include "test_util.hpp"
#include "vamkit/image_io.hpp"

using vamkit::testing::TempDir;

namespace {

struct CliRun {
    int code = -1;
    std::string out;
};

CliRun cli(const std::string& args) {
    const std::string cmd = std::string(VAMKIT_CLI_PATH) + " --threads 2 " + args + " 2>&1";
    CliRun r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf{};
    while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) r.out.append(buf.data(), n);
    const int status = ::pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string line_with(const std::string& text, const std::string& prefix) {
    const auto at = text.find(prefix);
    if (at == std::string::npos) return {};
    return text.substr(at, text.find('\n', at) - at);
}

}  // namespace

TEST(Cli, Help) { EXPECT_EQ(cli("--help").code, 0); }

TEST(Cli, UsageErrorsExitTwo) {
    TempDir tmp("cli-usage");
    EXPECT_EQ(cli("").code, 2);
    EXPECT_EQ(cli("frobnicate").code, 2);
    EXPECT_EQ(cli("gen-data").code, 2);
    EXPECT_EQ(cli("train --data " + (tmp / "absent").string() + " --out " + (tmp / "o").string()).code, 2);
    EXPECT_EQ(cli("gradcheck --scope everything").code, 2);
}

TEST(Cli, GenDataSmallestExample) {
    TempDir tmp("cli-gen");
    const auto dir = (tmp / "d").string();
    const CliRun a = cli("gen-data --out " + dir + " --items 2 --consumers 1 --seed 0 --train-ratio 0");
    ASSERT_EQ(a.code, 0) << a.out;
    EXPECT_NE(a.out.find("images    4 (2 shop, 2 consumer)"), std::string::npos) << a.out;
    EXPECT_NE(a.out.find("gallery   2"), std::string::npos) << a.out;
    EXPECT_NE(a.out.find("query     2"), std::string::npos) << a.out;
    const std::string first = vamkit::read_file(tmp / "d/manifest.json");

    const CliRun b = cli("gen-data --out " + dir + " --items 2 --consumers 1 --seed 0 --train-ratio 0");
    ASSERT_EQ(b.code, 0);
    EXPECT_EQ(line_with(a.out, "manifest"), line_with(b.out, "manifest"));
    EXPECT_EQ(first, vamkit::read_file(tmp / "d/manifest.json"));
}

TEST(Cli, GenDataRejectsTinyExtents) {
    TempDir tmp("cli-tiny");
    const CliRun r = cli("gen-data --out " + (tmp / "d").string() + " --items 2 --size 8x8");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("extents too small"), std::string::npos) << r.out;
}

TEST(Cli, TrainEvalRoundTrip) {
    TempDir tmp("cli-train");
    const auto data = (tmp / "d").string();
    const auto ckpt = (tmp / "ck").string();
    ASSERT_EQ(cli("gen-data --out " + data + " --items 8 --consumers 2 --seed 4").code, 0);
    vamkit::write_file(tmp / "cfg.json", R"({"train": {"epochs": 1, "negatives_per_pair": 4}})");
    vamkit::write_file(tmp / "bad.json", R"({"train": {"epochs": 1, "bogus": 3}})");
    EXPECT_EQ(cli("train --data " + data + " --out " + ckpt + " --config " + (tmp / "bad.json").string()).code, 2);

    const CliRun t = cli("train --data " + data + " --out " + ckpt + " --config " + (tmp / "cfg.json").string());
    ASSERT_EQ(t.code, 0) << t.out;
    EXPECT_TRUE(std::filesystem::exists(tmp / "ck/metrics.jsonl"));

    const CliRun e = cli("eval --ckpt " + ckpt + " --data " + data + " --k 4,1,100");
    ASSERT_EQ(e.code, 0) << e.out;
    const auto p1 = e.out.find("top-1 ");
    const auto p4 = e.out.find("top-4 ");
    const auto p100 = e.out.find("top-100 ");
    ASSERT_NE(p1, std::string::npos);
    EXPECT_LT(p1, p4);
    EXPECT_LT(p4, p100);
    EXPECT_NE(e.out.find("top-100  1\n"), std::string::npos) << e.out;
    EXPECT_TRUE(std::filesystem::exists(tmp / "ck/eval_report.json"));

    EXPECT_EQ(cli("eval --ckpt " + ckpt + " --data " + data + " --k 0").code, 2);
    EXPECT_EQ(cli("eval --ckpt " + (tmp / "nock").string() + " --data " + data).code, 2);

    const auto other = (tmp / "big").string();
    ASSERT_EQ(cli("gen-data --out " + other + " --items 2 --consumers 1 --size 48x48").code, 0);
    const CliRun m = cli("eval --ckpt " + ckpt + " --data " + other);
    EXPECT_EQ(m.code, 2);
    EXPECT_NE(m.out.find("dimension mismatch"), std::string::npos) << m.out;
}

TEST(Cli, GradcheckLayerScope) {
    const CliRun a = cli("gradcheck --scope layer --seed 2");
    ASSERT_EQ(a.code, 0) << a.out;
    EXPECT_NE(a.out.find("gradcheck passed"), std::string::npos);
    EXPECT_EQ(a.out, cli("gradcheck --scope layer --seed 2").out);
}

TEST(Cli, AblateSingleMode) {
    TempDir tmp("cli-ablate");
    const auto data = (tmp / "d").string();
    ASSERT_EQ(cli("gen-data --out " + data + " --items 8 --consumers 2 --seed 5").code, 0);
    const auto report = (tmp / "r.json").string();
    const CliRun r = cli("ablate --data " + data + " --modes none --seeds 1 --epochs 1 --k 1,5 --report " + report);
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("none"), std::string::npos);
    EXPECT_TRUE(std::filesystem::exists(report));
    EXPECT_EQ(cli("ablate --data " + data + " --modes sideways --seeds 1").code, 2);
}
