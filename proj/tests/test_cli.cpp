#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), {});
}

CliResult run_cli(const std::string& args) {
    const fs::path out_file = fs::temp_directory_path() / "tadfkd_cli_stdout.txt";
    const fs::path err_file = fs::temp_directory_path() / "tadfkd_cli_stderr.txt";
    const std::string cmd = std::string(TADFKD_CLI_PATH) + " " + args + " > " +
                            out_file.string() + " 2> " + err_file.string();
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    return r;
}

const char* kSpecText = R"({
  "schema_version": 1,
  "dataset": {"type": "grid", "classes": 3, "per_class": 40, "grid": [2, 3], "noise": 0.1, "seed": 11},
  "teacher": {"epochs": 8, "batch": 16, "hidden": [12], "seed": 5, "count": 1},
  "arms": ["ta-dfkd", "no-cls"],
  "seeds": [1],
  "train": {"d_z": 6, "batch": 16, "epochs": 3, "iterations_per_epoch": 2,
            "s_steps": 2, "student_hidden": [8], "generator_hidden": [10]},
  "k_last": 2,
  "output_dir": "runs"
})";

struct Workspace {
    fs::path root;
    fs::path config;

    Workspace() {
        root = fs::temp_directory_path() / "tadfkd_cli_ws";
        fs::remove_all(root);
        fs::create_directories(root);
        config = root / "exp.json";
        std::ofstream(config) << kSpecText;
    }
    ~Workspace() { fs::remove_all(root); }
};

} // namespace

TEST_CASE("cli contract") {
    Workspace ws;
    const std::string out_dir = (ws.root / "out").string();

    SUBCASE("usage errors exit 2") {
        CHECK(run_cli("").exit_code == 2);
        CHECK(run_cli("distill").exit_code == 2); // missing required options
    }

    SUBCASE("missing config exits 3 with the path in the message") {
        const CliResult r =
            run_cli("train-teacher --config " + (ws.root / "nope.json").string());
        CHECK(r.exit_code == 3);
        CHECK(r.err.find("nope.json") != std::string::npos);
    }

    SUBCASE("end-to-end train, distill, report") {
        const CliResult trained = run_cli("train-teacher --config " + ws.config.string() +
                                          " --snapshots 1 --out " + out_dir);
        CHECK(trained.exit_code == 0);
        const fs::path teacher = fs::path(out_dir) / "teachers" / "teacher_1.json";
        REQUIRE(fs::exists(teacher));
        CHECK(trained.out.find("teacher_1") != std::string::npos);

        SUBCASE("determinism: same seed reproduces the checkpoint") {
            const std::string again_dir = (ws.root / "again").string();
            const CliResult again = run_cli("train-teacher --config " + ws.config.string() +
                                            " --snapshots 1 --seed 5 --out " + again_dir);
            CHECK(again.exit_code == 0);
            CHECK(slurp(teacher) ==
                  slurp(fs::path(again_dir) / "teachers" / "teacher_1.json"));
        }

        SUBCASE("unknown arm exits 2 and lists valid arms") {
            const CliResult r = run_cli("distill --config " + ws.config.string() +
                                        " --teacher " + teacher.string() +
                                        " --arm mystery --out " + out_dir);
            CHECK(r.exit_code == 2);
            CHECK(r.err.find("ta-dfkd") != std::string::npos);
            CHECK(r.err.find("baseline") != std::string::npos);
        }

        SUBCASE("distill then report") {
            const CliResult d = run_cli("distill --config " + ws.config.string() +
                                        " --teacher " + teacher.string() +
                                        " --arm ta-dfkd --seed 1 --out " + out_dir);
            CHECK(d.exit_code == 0);
            CHECK(d.out.find("acc_max") != std::string::npos);
            const fs::path run_dir = fs::path(out_dir) / "ta-dfkd__teacher_1__s1";
            CHECK(fs::exists(run_dir / "telemetry.csv"));
            CHECK(fs::exists(run_dir / "config.json"));

            // override escape hatch is recorded in the fingerprint
            const CliResult o = run_cli("distill --config " + ws.config.string() +
                                        " --teacher " + teacher.string() +
                                        " --arm ta-dfkd --seed 2 --override tau=0.7" +
                                        " --out " + out_dir);
            CHECK(o.exit_code == 0);
            const std::string cfg_text =
                slurp(fs::path(out_dir) / "ta-dfkd__teacher_1__s2" / "config.json");
            CHECK(cfg_text.find("\"tau\": 0.7") != std::string::npos);

            // baseline arm: class-prior on, selection off, per the fingerprint
            const CliResult bl = run_cli("distill --config " + ws.config.string() +
                                         " --teacher " + teacher.string() +
                                         " --arm baseline --seed 1 --out " + out_dir);
            CHECK(bl.exit_code == 0);
            const std::string bl_text =
                slurp(fs::path(out_dir) / "baseline__teacher_1__s1" / "config.json");
            CHECK(bl_text.find("\"alpha\": 1.0") != std::string::npos);
            CHECK(bl_text.find("\"selection_enabled\": false") != std::string::npos);

            const CliResult rt = run_cli("report --runs " + out_dir + " --format text");
            CHECK(rt.exit_code == 0);
            CHECK(rt.out.find("teacher_1") != std::string::npos);
            const CliResult rj = run_cli("report --runs " + out_dir + " --format json");
            CHECK(rj.exit_code == 0);
            CHECK(fs::exists(fs::path(out_dir) / "report.json"));
            CHECK(fs::exists(fs::path(out_dir) / "ta-dfkd_accuracy.svg"));

            // text and json carry identical numbers: rendered from one report,
            // and a second invocation is byte-stable
            const std::string json_once = slurp(fs::path(out_dir) / "report.json");
            const CliResult rj2 = run_cli("report --runs " + out_dir + " --format json");
            CHECK(rj2.exit_code == 0);
            CHECK(json_once == slurp(fs::path(out_dir) / "report.json"));
            CHECK(rj.out == rj2.out);
        }

        SUBCASE("report on missing telemetry exits 3") {
            const CliResult r = run_cli("report --runs " + (ws.root / "void").string());
            CHECK(r.exit_code == 3);
        }
    }
}
