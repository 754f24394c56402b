#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "p3d2d/checkpoint.hpp"

// End-to-end runs of the installed binary: exit codes and config-file
// semantics (flags override file values).

#ifndef P3D2D_CLI_PATH
#define P3D2D_CLI_PATH "p3d2d"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run_cli(const std::string& args) {
    std::string cmd = std::string(P3D2D_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

fs::path fresh_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / "p3d2d_test_cli" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("cli exit codes: success, usage, data, verification") {
    auto dir = fresh_dir("codes");
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("phantom --dims 8 8 8 --out " + (dir / "small").string()) == 1);  // usage
    CHECK(run_cli("phantom --bogus-flag 1") == 1);                                  // parse error
    CHECK(run_cli("predict --model " + (dir / "no.ckpt").string() + " --subject " +
                  (dir / "nowhere").string() + " --out " + (dir / "out").string()) == 1);
    CHECK(run_cli("evaluate --pred " + (dir / "nope").string() + " --truth " +
                  (dir / "nope").string() + " --out " + (dir / "r").string()) == 2);  // format
    CHECK(run_cli("gradcheck --seed 1") == 0);
}

TEST_CASE("cli config file provides defaults and flags override it") {
    auto dir = fresh_dir("config");
    auto cfg_path = dir / "phantom.json";
    {
        json j{{"out", (dir / "from_file").string()},
               {"dims", {32, 32, 32}},
               {"seed", 42},
               {"subject_id", "from-file"}};
        std::ofstream f(cfg_path);
        f << j.dump();
    }
    CHECK(run_cli("phantom --config " + cfg_path.string()) == 0);
    CHECK(fs::exists(dir / "from_file" / "flair.mvol.json"));
    {
        std::ifstream f(dir / "from_file" / "config.json");
        json echo;
        f >> echo;
        CHECK(echo["seed"] == 42);
        CHECK(echo["subject_id"] == "from-file");
    }

    // flag overrides the file's output directory, file still supplies dims/seed
    CHECK(run_cli("phantom --config " + cfg_path.string() + " --out " +
                  (dir / "overridden").string()) == 0);
    CHECK(fs::exists(dir / "overridden" / "flair.mvol.json"));
    {
        std::ifstream f(dir / "overridden" / "config.json");
        json echo;
        f >> echo;
        CHECK(echo["seed"] == 42);
    }

    CHECK(run_cli("phantom --config " + (dir / "missing.json").string()) == 2);
}
