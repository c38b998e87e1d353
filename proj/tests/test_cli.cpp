#include <cstdlib>
#include <fstream>
#include <sstream>

#include "test_util.hpp"

using namespace ecgdig;
namespace fs = std::filesystem;
using ecgdig::test::read_file;
using ecgdig::test::TempDir;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(ECGDIG_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream out(p);
    out << s;
}

std::vector<fs::path> files_with_extension(const fs::path& dir, const std::string& ext) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ext) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> lines_of(const fs::path& p) {
    std::istringstream in(read_file(p));
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

void synthesize_small(const TempDir& tmp, const std::string& dir, int count, std::uint64_t seed = 1) {
    write_text(tmp / "spec.json", R"({"d_min": 6, "d_max": 8})");
    ASSERT_EQ(run("synthesize --spec " + (tmp / "spec.json").string() + " --count " + std::to_string(count) +
                  " --seed " + std::to_string(seed) + " --out " + (tmp / dir).string()),
              0);
}

}  // namespace

TEST(Cli, HelpAndBadArguments) {
    EXPECT_EQ(run("--help"), 0);
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("digitize"), 2);
    EXPECT_EQ(run("frobnicate"), 2);
}

TEST(Cli, SynthesizeIsReproducible) {
    TempDir tmp("cli");
    synthesize_small(tmp, "a", 3, 42);
    synthesize_small(tmp, "b", 3, 42);
    const auto a = files_with_extension(tmp / "a", ".png");
    ASSERT_EQ(a.size(), 3u);
    for (const std::string ext : {".png", ".csv", ".txt"})
        for (const auto& p : files_with_extension(tmp / "a", ext))
            EXPECT_EQ(read_file(p), read_file(tmp / "b" / p.filename())) << p.filename();
}

TEST(Cli, SynthesizeRespectsSpacingRangeAndRecordsWarp) {
    TempDir tmp("cli");
    write_text(tmp / "spec.json", R"({"d_min": 6, "d_max": 40, "style": "photo", "rotation_max_deg": 5})");
    ASSERT_EQ(run("synthesize --spec " + (tmp / "spec.json").string() + " --count 4 --seed 3 --out " +
                  (tmp / "s").string()),
              0);
    for (const auto& p : files_with_extension(tmp / "s", ".txt")) {
        const GroundTruth t = read_ground_truth(p);
        EXPECT_GE(t.grid_minor_px, 6.0);
        EXPECT_LE(t.grid_minor_px, 40.0);
        EXPECT_EQ(t.style, "photo");
        EXPECT_FALSE(t.homography.isIdentity(1e-12));
    }
}

TEST(Cli, InvalidSynthesisSpecIsConfigError) {
    TempDir tmp("cli");
    write_text(tmp / "spec.json", R"({"d_min": 30, "d_max": 10})");
    EXPECT_EQ(run("synthesize --spec " + (tmp / "spec.json").string() + " --count 1 --out " + (tmp / "s").string()), 2);
}

TEST(Cli, BatchWithOneCorruptFile) {
    TempDir tmp("cli");
    synthesize_small(tmp, "in", 5);
    const auto pngs = files_with_extension(tmp / "in", ".png");
    ASSERT_EQ(pngs.size(), 5u);
    EXPECT_EQ(run("digitize " + (tmp / "in").string() + " --out " + (tmp / "out").string()), 0);
    EXPECT_EQ(files_with_extension(tmp / "out", ".csv").size(), 6u);  // five records plus report.csv
    EXPECT_EQ(lines_of(tmp / "out" / "report.csv").front(), "# images=5 failures=0");

    write_text(pngs[2], "not a png");
    EXPECT_EQ(run("digitize " + (tmp / "in").string() + " --out " + (tmp / "out2").string()), 0);
    EXPECT_EQ(files_with_extension(tmp / "out2", ".csv").size(), 5u);
    const auto report = lines_of(tmp / "out2" / "report.csv");
    EXPECT_EQ(report.front(), "# images=5 failures=1");
    int failed = 0;
    for (const auto& line : report)
        if (line.find("decode_error") != std::string::npos) ++failed;
    EXPECT_EQ(failed, 1);
    EXPECT_FALSE(fs::exists(tmp / "out2" / (pngs[2].stem().string() + ".csv")));
}

TEST(Cli, BadConfigIsExitTwo) {
    TempDir tmp("cli");
    synthesize_small(tmp, "in", 1);
    write_text(tmp / "bad.ini", "[pipeline]\npaper_speed = 30\n");
    EXPECT_EQ(run("digitize " + (tmp / "in").string() + " --config " + (tmp / "bad.ini").string() + " --out " +
                  (tmp / "out").string()),
              2);
    EXPECT_EQ(run("digitize " + (tmp / "in").string() + " --speed 30 --out " + (tmp / "out").string()), 2);
    EXPECT_EQ(run("digitize " + (tmp / "in").string() + " --segmentation external --out " + (tmp / "out").string()),
              2);
}

TEST(Cli, EvaluatePerfectAndZeroPredictions) {
    TempDir tmp("cli");
    synthesize_small(tmp, "truth", 2);
    fs::create_directories(tmp / "same");
    fs::create_directories(tmp / "zero");
    for (const auto& p : files_with_extension(tmp / "truth", ".csv")) {
        fs::copy_file(p, tmp / "same" / p.filename());
        SignalTable t = read_signal_csv(p);
        for (auto& c : t.leads)
            for (double& v : c.values)
                if (!std::isnan(v)) v = 0.0;
        write_signal_csv(t, tmp / "zero" / p.filename());
    }
    ASSERT_EQ(run("evaluate --pred " + (tmp / "same").string() + " --truth " + (tmp / "truth").string() + " --out " +
                  (tmp / "same.csv").string()),
              0);
    const auto same = lines_of(tmp / "same.csv");
    ASSERT_GT(same.size(), 1u);
    for (std::size_t i = 1; i < same.size(); ++i) {
        EXPECT_NE(same[i].find(",inf,0,1,0,"), std::string::npos) << same[i];
    }
    ASSERT_TRUE(fs::exists(tmp / "same_summary.csv"));

    ASSERT_EQ(run("evaluate --pred " + (tmp / "zero").string() + " --truth " + (tmp / "truth").string() + " --out " +
                  (tmp / "zero.csv").string()),
              0);
    const auto zero = lines_of(tmp / "zero.csv");
    for (std::size_t i = 1; i < zero.size(); ++i) {
        std::vector<std::string> cells;
        std::stringstream ss(zero[i]);
        for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
        ASSERT_GE(cells.size(), 4u);
        EXPECT_NEAR(std::stod(cells[3]), 0.0, 1e-9) << zero[i];
    }
}

TEST(Cli, EvaluateMissingDirectoryIsExitTwo) {
    TempDir tmp("cli");
    EXPECT_EQ(run("evaluate --pred " + (tmp / "nope").string() + " --truth " + (tmp / "nope2").string()), 2);
}

TEST(Cli, ExternalProbabilityMaps) {
    TempDir tmp("cli");
    synthesize_small(tmp, "in", 1);
    const auto pngs = files_with_extension(tmp / "in", ".png");
    fs::create_directories(tmp / "maps");
    const ProbMap m = segment(load_image(pngs[0]), {});
    write_probmap(m, tmp / "maps" / (pngs[0].stem().string() + ".pmap"));
    ASSERT_EQ(run("digitize " + pngs[0].string() + " --segmentation external --probmap-dir " + (tmp / "maps").string() +
                  " --out " + (tmp / "ext").string()),
              0);
    ASSERT_EQ(run("digitize " + pngs[0].string() + " --out " + (tmp / "cls").string()), 0);
    const std::string name = pngs[0].stem().string() + ".csv";
    EXPECT_EQ(read_file(tmp / "ext" / name), read_file(tmp / "cls" / name));
}

TEST(Cli, WorkerCountDoesNotChangeOutput) {
    TempDir tmp("cli");
    synthesize_small(tmp, "in", 3);
    ASSERT_EQ(run("digitize " + (tmp / "in").string() + " --workers 1 --out " + (tmp / "w1").string()), 0);
    ASSERT_EQ(run("digitize " + (tmp / "in").string() + " --workers 3 --out " + (tmp / "w3").string()), 0);
    for (const auto& p : files_with_extension(tmp / "w1", ".csv"))
        EXPECT_EQ(read_file(p), read_file(tmp / "w3" / p.filename())) << p.filename();
}
