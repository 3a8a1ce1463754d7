#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "jacprobe/cli.hpp"
#include "jacprobe/serialize.hpp"

using namespace jacprobe;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out, err;
};

Outcome invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "jacprobe");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("jacprobe_cli_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& file) const { return (path / file).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Json without_metadata(const std::string& path) {
    Json j = read_json_file(path);
    j.erase("metadata");
    return j;
}

} // namespace

TEST_CASE("gen-density writes the checkerboard") {
    TempDir dir("gen");
    const auto r = invoke({"gen-density", "--checkerboard", "N=4,c=1", "--grid", "64x64", "-o", dir / "rho.json"});
    REQUIRE(r.code == 0);
    const Json j = read_json_file(dir / "rho.json");
    CHECK(j["integral"].get<double>() == 0.375);
    const auto rho = density_from_json(j);
    CHECK(integrate(rho, rho.grid_mask(true)) == 0.375);
    CHECK(j["config"]["checkerboard"]["N"] == 4);
    CHECK(j["metadata"].contains("timestamp"));

    REQUIRE(invoke({"gen-density", "--checkerboard", "N=4,c=1", "--embedded", "--grid", "64x64", "-o",
                    dir / "emb.json", "--csv", dir / "emb.csv"})
                .code == 0);
    const auto emb = density_from_json(read_json_file(dir / "emb.json"));
    CHECK(emb.rect() == Rect::unit());
    CHECK(integrate(emb, emb.grid_mask(true)) == doctest::Approx(1.125));
    CHECK(fs::exists(dir / "emb.csv"));
}

TEST_CASE("solve on a constant density") {
    TempDir dir("solve");
    REQUIRE(invoke({"gen-density", "--constant", "1", "--grid", "16x16", "-o", dir / "const1.json"}).code == 0);
    const auto r = invoke({"solve", "--rho", dir / "const1.json", "--L", "2", "-o", dir / "report.json",
                           "--trace-csv", dir / "trace.csv"});
    REQUIRE(r.code == 0);
    const Json j = read_json_file(dir / "report.json");
    CHECK(j["mismatch_area"].get<double>() == 0.0);
    CHECK(j["iterations"] == 0);
    CHECK(j["config"]["solver"]["L"] == 2.0);
    CHECK(slurp(dir / "trace.csv").rfind("step,objective\n", 0) == 0);
}

TEST_CASE("exit codes") {
    TempDir dir("codes");
    CHECK(invoke({}).code == 2);
    CHECK(invoke({"frobnicate"}).code == 2);
    CHECK(invoke({"solve", "--bogus", "1"}).code == 2);
    CHECK(invoke({"solve", "-o", dir / "x.json"}).code == 2); // no --rho
    CHECK(invoke({"--help"}).code == 0);

    const auto missing = invoke({"solve", "--rho", dir / "nope.json", "-o", dir / "x.json"});
    CHECK(missing.code == 1);
    const Json e = Json::parse(missing.err);
    CHECK(e["error"].contains("kind"));
    CHECK(e["error"]["message"].get<std::string>().find("nope.json") != std::string::npos);

    std::ofstream(dir / "bad.json") << R"({"nx": 2, "ny": 2, "rect": [0, 0, 1, 1]})";
    const auto bad = invoke({"solve", "--rho", dir / "bad.json", "-o", dir / "x.json"});
    CHECK(bad.code == 1);
    const Json be = Json::parse(bad.err);
    CHECK(be["error"]["kind"] == "format");
    CHECK(be["error"]["message"] == "missing field 'values'");

    REQUIRE(invoke({"gen-density", "--constant", "1", "--grid", "4x4", "-o", dir / "one.json"}).code == 0);
    const auto domain = invoke({"solve", "--rho", dir / "one.json", "--tau", "-1", "-o", dir / "x.json"});
    CHECK(domain.code == 1);
    CHECK(Json::parse(domain.err)["error"]["kind"] == "domain");
}

TEST_CASE("config files lose to flags") {
    TempDir dir("config");
    REQUIRE(invoke({"gen-density", "--constant", "1", "--grid", "8x8", "-o", dir / "one.json"}).code == 0);
    std::ofstream(dir / "cfg.json") << R"({"L": 3, "tau": 0.2, "solver": {"barrier_weight": 0.001}})";
    REQUIRE(invoke({"solve", "--config", dir / "cfg.json", "--rho", dir / "one.json", "--L", "2", "-o",
                    dir / "r.json"})
                .code == 0);
    const Json j = read_json_file(dir / "r.json");
    CHECK(j["config"]["solver"]["L"] == 2.0);
    CHECK(j["config"]["solver"]["tau"] == 0.2);
    CHECK(j["config"]["solver"]["barrier_weight"] == 0.001);

    std::ofstream(dir / "typo.json") << R"({"Lipschitz": 3})";
    const auto r = invoke({"solve", "--config", dir / "typo.json", "--rho", dir / "one.json", "-o", dir / "r.json"});
    CHECK(r.code == 1);
    CHECK(Json::parse(r.err)["error"]["message"] == "unknown config field 'Lipschitz'");
}

TEST_CASE("stretch, perturb and patch-linf") {
    TempDir dir("misc");
    std::ofstream(dir / "id.json") << to_json(identity_map(8, 8)).dump();
    REQUIRE(invoke({"stretch", "--map", dir / "id.json", "--checkerboard", "N=4,c=1", "-o", dir / "s.json"}).code == 0);
    const Json s = read_json_file(dir / "s.json");
    CHECK(s["pairs"].size() == 3);
    CHECK(s["max_ratio"].get<double>() == doctest::Approx(1.0));

    REQUIRE(invoke({"gen-density", "--constant", "1", "--grid", "8x8", "-o", dir / "one.json"}).code == 0);
    REQUIRE(invoke({"stretch", "--map", dir / "id.json", "--segments", "0.1,0.1,0.9,0.1", "--rho", dir / "one.json",
                    "--delta", "0.1", "--kappa", "0", "--L", "1.5", "-o", dir / "c.json"})
                .code == 0);
    CHECK(read_json_file(dir / "c.json")["verdict"] == "HOLDS");

    REQUIRE(invoke({"gen-density", "--ramp", "1,2", "--grid", "64x64", "-o", dir / "ramp.json"}).code == 0);
    REQUIRE(invoke({"perturb", "--rho", dir / "ramp.json", "--eps", "0.05", "--square", "0.03125", "-o",
                    dir / "p.json"})
                .code == 0);
    CHECK(read_json_file(dir / "p.json")["sup_difference"].get<double>() < 0.05);
    REQUIRE(invoke({"patch-linf", "--rho", dir / "ramp.json", "--eps", "0.05", "-o", dir / "l.json"}).code == 0);
    CHECK(read_json_file(dir / "l.json")["sup_difference"].get<double>() <= 0.1);
}

TEST_CASE("refine writes one density per level") {
    TempDir dir("refine");
    const auto r = invoke({"refine", "--checkerboard", "N=4,c=1", "--grid", "32x32", "--levels", "2",
                           "--inner-cells", "2", "--L", "1.3", "--max-iterations", "20", "-o", dir.path.string()});
    REQUIRE(r.code == 0);
    for (const char* f : {"level_0.json", "level_1.json", "level_2.json", "history.json"}) CHECK(fs::exists(dir / f));
    const Json h = read_json_file(dir / "history.json");
    CHECK(h["status"] == "complete");
    CHECK(h["history"].size() == 2);
}

TEST_CASE("verify-lemma2 on dilations") {
    TempDir dir("lemma2");
    const auto r = invoke({"verify-lemma2", "--dilation", "6", "--eps", "0.1", "--raster", "128", "--region-grid",
                           "64", "--map-grid", "8", "-o", dir / "v.json"});
    REQUIRE(r.code == 0);
    const Json j = read_json_file(dir / "v.json");
    REQUIRE(j["k0"].is_number());
    CHECK(j["k0"].get<int>() <= 4);
    CHECK(invoke({"verify-lemma2", "--dilation", "3", "--eps", "0", "-o", dir / "w.json"}).code == 1);
}

TEST_CASE("sweeps are deterministic") {
    TempDir dir("sweep");
    auto sweep = [&](const std::string& name, const std::string& workers) {
        return invoke({"sweep", "--N", "2,4", "--c", "1", "--L", "1.2", "--tau", "0.3", "--grid", "16x16",
                       "--restarts", "1", "--max-iterations", "30", "--seed", "5", "--workers", workers, "-o",
                       dir / name});
    };
    REQUIRE(sweep("a.csv", "1").code == 0);
    REQUIRE(sweep("b.csv", "2").code == 0);
    CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
    Json a = without_metadata(dir / "a.json"), b = without_metadata(dir / "b.json");
    for (Json* j : {&a, &b}) {
        j->erase("csv");
        (*j)["config"].erase("workers");
    }
    CHECK(a.dump() == b.dump());
    const std::string first = without_metadata(dir / "a.json").dump();
    REQUIRE(sweep("a.csv", "1").code == 0);
    CHECK(without_metadata(dir / "a.json").dump() == first);

    std::istringstream csv(slurp(dir / "a.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "N,c,L,tau,mismatch_area,min_stretch_ratio,max_stretch_ratio,achieved_L,iterations,evidence");
    int rows = 0;
    while (std::getline(csv, line)) ++rows;
    CHECK(rows == 2);
}
