#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lmmsel/cli.hpp"
#include "lmmsel/report.hpp"

using namespace lmmsel;

namespace {

const std::string kData = std::string(LMMSEL_TEST_DIR) + "/data/small.csv";
const std::string kGoldenDir = std::string(LMMSEL_TEST_DIR) + "/golden";

struct Run {
    int code = 0;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "lmmsel");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Run r;
    r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::vector<std::string> data_args() {
    return {"--data", kData, "--subject-col", "id", "--response-col", "y", "--fixed-cols", "x1,x2,x3,x4",
            "--random-cols", "x1,x2", "--add-random-intercept"};
}

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("lmmsel_test_" + name)).string();
}

// Same keys everywhere, equal strings and booleans, numbers within a relative
// tolerance. Keys in `skip` are compared for presence only.
void compare_json(const Json& got, const Json& want, const std::string& path, double rtol,
                  const std::vector<std::string>& skip) {
    for (const auto& s : skip)
        if (path == s) return;
    if (want.is_number() && got.is_number()) {
        const double a = got.get<double>(), b = want.get<double>();
        INFO(path << ": " << a << " vs " << b);
        CHECK(std::abs(a - b) <= rtol * std::max(1.0, std::abs(b)));
        return;
    }
    INFO(path);
    REQUIRE(got.type() == want.type());
    if (want.is_object()) {
        std::vector<std::string> gk, wk;
        for (const auto& [k, v] : got.items()) gk.push_back(k);
        for (const auto& [k, v] : want.items()) wk.push_back(k);
        REQUIRE(gk == wk);
        for (const auto& [k, v] : want.items()) compare_json(got[k], v, path + "/" + k, rtol, skip);
    } else if (want.is_array()) {
        REQUIRE(got.size() == want.size());
        for (size_t k = 0; k < want.size(); ++k)
            compare_json(got[k], want[k], path + "/" + std::to_string(k), rtol, skip);
    } else {
        CHECK(got == want);
    }
}

} // namespace

TEST_CASE("cli exit codes") {
    SUBCASE("no subcommand") { CHECK(run({}).code == kExitUsage); }
    SUBCASE("help") { CHECK(run({"--help"}).code == kExitOk); }
    SUBCASE("version") {
        const auto r = run({"--version"});
        CHECK(r.code == kExitOk);
        CHECK(r.out.find(kLibraryVersion) != std::string::npos);
    }
    SUBCASE("missing response column flag") {
        CHECK(run({"fit-fixed", "--data", kData, "--subject-col", "id"}).code == kExitUsage);
    }
    SUBCASE("unknown penalty") {
        CHECK(run(with(with({"fit-fixed"}, data_args()), {"--penalty", "ridge"})).code == kExitUsage);
    }
    SUBCASE("true-g without sigma2") {
        CHECK(run(with(with({"fit-random"}, data_args()), {"--proxy", "true-g", "--proxy-file", kData})).code ==
              kExitUsage);
    }
    SUBCASE("increasing lambda grid") {
        CHECK(run(with(with({"fit-fixed"}, data_args()), {"--lambda-grid", "0.1,0.2"})).code == kExitUsage);
    }
    SUBCASE("missing file") {
        CHECK(run({"fit-fixed", "--data", "/nonexistent/x.csv", "--subject-col", "id", "--response-col", "y"}).code ==
              kExitData);
    }
    SUBCASE("unknown column") {
        CHECK(run({"fit-fixed", "--data", kData, "--subject-col", "id", "--response-col", "nope"}).code == kExitData);
    }
    SUBCASE("strict non-convergence") {
        const auto args = with(with({"fit-fixed"}, data_args()), {"--lambda", "0.05", "--max-lla", "1"});
        CHECK(run(args).code == kExitOk);
        CHECK(run(with(args, {"--strict"})).code == kExitNotConverged);
    }
}

TEST_CASE("cli writes json to stdout and the table to stderr") {
    const auto r = run(with(with({"fit-fixed"}, data_args()), {"--lambda", "0.05"}));
    REQUIRE(r.code == kExitOk);
    const Json doc = Json::parse(r.out);
    CHECK(doc["schema_version"] == kSchemaVersion);
    CHECK(doc["command"] == "fit-fixed");
    CHECK(doc["config"]["lambda"] == 0.05);
    CHECK(doc["config"]["penalty"] == "scad");
    CHECK(doc["config"]["add-random-intercept"] == true);
    CHECK(r.err.find("Fixed effects") != std::string::npos);
}

TEST_CASE("cli leaves the input untouched and writes the output file") {
    const std::string before = slurp(kData);
    const std::string path = temp_path("fit.json");
    const auto r = run(with(with({"fit", "--refit"}, data_args()), {"--output", path}));
    REQUIRE(r.code == kExitOk);
    CHECK(slurp(kData) == before);
    const Json doc = Json::parse(slurp(path));
    CHECK(doc["result"].contains("pipeline"));
    CHECK(doc["result"].contains("refit"));
    CHECK(r.out.find("Refit") != std::string::npos);
    std::filesystem::remove(path);
}

TEST_CASE("cli simulate is byte-identical across runs and thread counts") {
    const std::vector<std::string> args = {"simulate", "--N",         "12", "--ni",     "4",  "--replicates", "2",
                                           "--seed",   "5",           "--grid-size", "8"};
    const auto a = run(args);
    const auto b = run(args);
    REQUIRE(a.code == kExitOk);
    CHECK(a.out == b.out);
    CHECK(a.err == b.err);
    const auto c = run(with(args, {"--threads", "2"}));
    const Json ja = Json::parse(a.out), jc = Json::parse(c.out);
    CHECK(ja["result"] == jc["result"]);
    CHECK(ja["seed"] == 5);
}

TEST_CASE("cli diagnose reports zero discrepancy when the proxy is the truth") {
    const std::string g = temp_path("G.csv");
    {
        std::ofstream f(g);
        f << "1.0,0.2,0.0\n0.2,0.5,0.1\n0.0,0.1,0.3\n";
    }
    const auto r = run(with(with({"diagnose"}, data_args()), {"--proxy", "true-g", "--proxy-file", g, "--sigma2",
                                                               "1.0", "--reference-g", g, "--reference-sigma2", "1.0"}));
    REQUIRE(r.code == kExitOk);
    const Json d = Json::parse(r.out)["result"]["diagnostics"];
    CHECK(std::abs(d["fixed_T_discrepancy"].get<double>()) <= 1e-8);
    CHECK(std::abs(d["fixed_E_discrepancy"].get<double>()) <= 1e-8);
    CHECK(std::abs(d["random_T11_discrepancy"].get<double>()) <= 1e-8);
    CHECK(d["condition_random"] == true);
    CHECK(run(with(with({"diagnose"}, data_args()), {"--reference-g", g, "--active-fixed", "x9"})).code ==
          kExitUsage);
    std::filesystem::remove(g);
}

TEST_CASE("cli oracle is never worse than fit-fixed") {
    const auto args = with({"--data", kData, "--subject-col", "id", "--response-col", "y", "--fixed-cols",
                            "x1,x2,x3,x4", "--random-cols", "x1", "--add-random-intercept"},
                           {"--lambda", "0.05"});
    const auto fit = run(with({"fit-fixed"}, args));
    const auto orc = run(with({"oracle", "--target", "fixed"}, args));
    REQUIRE(fit.code == kExitOk);
    REQUIRE(orc.code == kExitOk);
    const double f = Json::parse(fit.out)["result"]["fit"]["objective"].get<double>();
    const double o = Json::parse(orc.out)["result"]["objective"].get<double>();
    // The oracle is global; the LLA path from zero may stop at a local minimum.
    CHECK(o <= f + 1e-9 * std::max(1.0, std::abs(f)));
    CHECK(Json::parse(orc.out)["result"]["estimate"].size() == 4);
}

TEST_CASE("cli golden output") {
    // Set LMMSEL_REGEN_GOLDEN=1 to rewrite the files after an intended change.
    const bool regen = std::getenv("LMMSEL_REGEN_GOLDEN") != nullptr;
    const std::vector<std::pair<std::string, std::vector<std::string>>> cases = {
        {"fit_fixed.json", with(with({"fit-fixed"}, data_args()), {"--lambda", "0.05"})},
        {"fit_random.json", with(with({"fit-random"}, data_args()), {"--grid-size", "12"})},
        {"fit.json", with(with({"fit", "--refit"}, data_args()), {"--grid-size", "12"})},
    };
    for (const auto& [file, args] : cases) {
        INFO(file);
        const auto r = run(args);
        REQUIRE(r.code == kExitOk);
        const std::string path = kGoldenDir + "/" + file;
        if (regen) {
            std::ofstream(path, std::ios::binary) << r.out;
            continue;
        }
        REQUIRE(std::filesystem::exists(path));
        compare_json(Json::parse(r.out), Json::parse(slurp(path)), "", 1e-6, {"/config/data"});
    }
}
