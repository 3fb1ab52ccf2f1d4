#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <string>

#include "cctp/cctp.hpp"

namespace fs = std::filesystem;
using namespace cctp;

namespace {

struct CliRun {
    int code = -1;
    std::string out;
};

CliRun cli(const std::string& args) {
    std::string cmd = std::string(CCTP_CLI_PATH) + " " + args + " 2>&1";
    CliRun r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) r.out += buf.data();
    int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = fs::temp_directory_path() / ("cctp_cli_test_" + std::to_string(getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        ASSERT_EQ(cli("gen --level 1 --train 800 --val 100 --test 100 --seed 7 -o " + p("d1.txt")).code, 0);
        ASSERT_EQ(cli("fit --data " + p("d1.txt") + " --artifacts " + p("art1") + " --sigma 0").code, 0);
        ASSERT_EQ(cli("gen --level 2 --train 400 --val 0 --test 50 --seed 3 -o " + p("d2.txt")).code, 0);
        ASSERT_EQ(cli("fit --data " + p("d2.txt") + " --artifacts " + p("art2") + " --sigma 0.05").code, 0);
    }
    static void TearDownTestSuite() { fs::remove_all(dir_); }
    static std::string p(const std::string& name) { return (dir_ / name).string(); }
    static fs::path dir_;
};

fs::path Cli::dir_;

}  // namespace

TEST_F(Cli, GenWritesAllRecords) {
    Dataset ds = read_dataset(textio::read_file(p("d1.txt")));
    EXPECT_EQ(ds.tasks.size(), 1000u);
}

TEST_F(Cli, GenRejectsBadLevel) {
    EXPECT_EQ(cli("gen --level 5 -o " + p("bad.txt")).code, 1);
    EXPECT_EQ(cli("gen --level 3 --split unseen-task -o " + p("bad.txt")).code, 1);
    EXPECT_EQ(cli("").code, 1);
}

TEST_F(Cli, GenIsDeterministic) {
    ASSERT_EQ(cli("gen --level 1 --train 800 --val 100 --test 100 --seed 7 --jobs 3 -o " + p("d1b.txt")).code, 0);
    EXPECT_EQ(textio::read_file(p("d1.txt")), textio::read_file(p("d1b.txt")));
}

TEST_F(Cli, FitWritesVersionedArtifacts) {
    for (const char* name : {"codebook.txt", "symbolizer.txt", "model.txt", "maps.txt"}) {
        std::string text = textio::read_file(fs::path(p("art1")) / name);
        EXPECT_EQ(text.rfind("#schema cctp.", 0), 0u) << name;
        EXPECT_NE(text.find(" v1\n"), std::string::npos) << name;
    }
    CliRun r = cli("fit --data " + p("d1.txt") + " --artifacts " + p("art1b") + " --sigma 0");
    EXPECT_NE(r.out.find("purity TYPE        1\n"), std::string::npos) << r.out;
    EXPECT_EQ(cli("fit --data " + p("missing.txt") + " --artifacts " + p("x")).code, 2);
}

TEST_F(Cli, PlanPrintsReplayablePlans) {
    Dataset ds = read_dataset(textio::read_file(p("d2.txt")));
    const Task& t = *ds.split(Split::test).front();
    CliRun r = cli("plan --artifacts " + p("art2") + " --data " + p("d2.txt") + " --task-id " + t.task_id + " --topk 5");
    ASSERT_EQ(r.code, 0) << r.out;
    int listed = 0;
    for (std::size_t pos = 0; (pos = r.out.find("\n#", pos)) != std::string::npos; ++pos) ++listed;
    EXPECT_GE(listed, 1);
    EXPECT_LE(listed, 5);
    EXPECT_NE(r.out.find("#1 score="), std::string::npos);
    EXPECT_NE(r.out.find("[success]"), std::string::npos);
}

TEST_F(Cli, PlanEmptyWhenAtGoal) {
    CliRun r = cli("plan --artifacts " + p("art1") + " --level 1 --init x=1,y=1 --goal x=1,y=1");
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("len=0 [success] (empty)"), std::string::npos) << r.out;
}

TEST_F(Cli, PlanNoPlanIsNonzero) {
    CliRun r = cli("plan --artifacts " + p("art1") + " --level 1 --init x=0,y=0 --goal x=2,y=4 --lmax 2");
    EXPECT_NE(r.code, 0);
    EXPECT_EQ(cli("plan --artifacts " + p("art1") + " --level 1 --init q=1 --goal x=0").code, 1);
}

TEST_F(Cli, EvalReportsAndGates) {
    CliRun r = cli("eval --artifacts " + p("art1") + " --data " + p("d1.txt") + " -o " + p("rep1") + " --min-top1 99");
    ASSERT_EQ(r.code, 0) << r.out;
    std::string summary = textio::read_file(fs::path(p("rep1")) / "summary.txt");
    EXPECT_NE(summary.find("top1=100.00%"), std::string::npos) << summary;
    CliRun chance = cli("eval --artifacts " + p("art1") + " --data " + p("d1.txt") + " -o " + p("rep_chance") +
                     " --baseline chance --min-top1 50");
    EXPECT_EQ(chance.code, 3);
    std::string records = textio::read_file(fs::path(p("rep_chance")) / "records.tsv");
    EXPECT_NE(records.find("\nchance\t"), std::string::npos);
}

TEST_F(Cli, EvalCompareHasAllRows) {
    CliRun r = cli("eval --artifacts " + p("art2") + " --data " + p("d2.txt") + " -o " + p("rep2") + " --compare");
    ASSERT_EQ(r.code, 0) << r.out;
    std::string summary = textio::read_file(fs::path(p("rep2")) / "summary.txt");
    for (const char* row : {"\nsymbolic ", "\ntokenspace ", "\nchance "}) EXPECT_NE(summary.find(row), std::string::npos);
    EXPECT_NE(summary.find("#config data=d2.txt"), std::string::npos);
}

TEST_F(Cli, EvalCodebookSeedMismatch) {
    ASSERT_EQ(cli("gen --level 1 --train 10 --val 0 --test 5 --seed 7 --codebook-seed 9 -o " + p("d1c.txt")).code, 0);
    CliRun r = cli("eval --artifacts " + p("art1") + " --data " + p("d1c.txt") + " -o " + p("rep_bad"));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("codebook seed"), std::string::npos);
}

TEST_F(Cli, ArtifactDirFromEnvironment) {
    std::string cmd = "CCTP_ARTIFACT_DIR=" + p("art1") + " " + std::string(CCTP_CLI_PATH) + " eval --data " + p("d1.txt") +
                      " -o " + p("rep_env") + " > /dev/null 2>&1";
    EXPECT_EQ(WEXITSTATUS(std::system(cmd.c_str())), 0);
    EXPECT_TRUE(fs::exists(fs::path(p("rep_env")) / "summary.txt"));
}

TEST_F(Cli, ReportWritesTables) {
    ASSERT_EQ(cli("gen --level 4 --train 400 --val 0 --test 50 --seed 2 -o " + p("d4.txt")).code, 0);
    ASSERT_EQ(cli("fit --data " + p("d4.txt") + " --artifacts " + p("art4")).code, 0);
    CliRun r = cli("report --artifacts " + p("art4") + " --data " + p("d4.txt") + " -o " + p("rep4"));
    ASSERT_EQ(r.code, 0) << r.out;
    for (const char* f : {"displacement.txt", "displacement.tsv", "position_changes.tsv"})
        EXPECT_TRUE(fs::exists(fs::path(p("rep4")) / f)) << f;
}

TEST_F(Cli, UnseenSplitsGenerate) {
    EXPECT_EQ(cli("gen --level 2 --split unseen-task --train 50 --val 0 --test 10 -o " + p("ut.txt")).code, 0);
    EXPECT_EQ(cli("gen --level 1 --split unseen-object --held-out 8,9 --train 50 --val 0 --test 10 -o " + p("uo.txt")).code, 0);
    EXPECT_EQ(read_dataset(textio::read_file(p("uo.txt"))).variant, "unseen_object:8,9");
}
