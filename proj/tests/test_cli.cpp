// End-to-end checks of the CLI surface: drives the built binary through the
// documented subcommands, flags, file formats, and exit codes.

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "cma/io.hpp"

using namespace cma;

namespace {

std::string cli_bin() {
    const char* p = std::getenv("CMA_CLI_BIN");
    return p ? p : "";
}

struct RunResult {
    int exit_code;
    std::string out;
};

RunResult run_cli(const std::string& args, const std::string& out_tag) {
    std::string out_path = std::string(std::tmpnam(nullptr)) + "_" + out_tag;
    std::string cmd = cli_bin() + " " + args + " > " + out_path + " 2>/dev/null";
    int rc = std::system(cmd.c_str());
    std::ifstream f(out_path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    std::remove(out_path.c_str());
    return {WEXITSTATUS(rc), text};
}

std::string write_trials(int n, unsigned seed) {
    std::string path = std::string(std::tmpnam(nullptr)) + "_train.csv";
    std::ofstream f(path);
    f << "x0,x1,y,v\n";
    std::srand(seed);
    for (int i = 0; i < n; ++i) {
        double a = std::rand() / double(RAND_MAX) * 2 - 1;
        double b = std::rand() / double(RAND_MAX) * 2 - 1;
        double y = a + 0.5 * b + 0.05 * (std::rand() / double(RAND_MAX) - 0.5);
        f << a << ',' << b << ',' << y << ",0.04\n";
    }
    return path;
}

std::string write_tests(unsigned seed) {
    std::string path = std::string(std::tmpnam(nullptr)) + "_test.csv";
    std::ofstream f(path);
    f << "x0,x1,v\n";
    std::srand(seed);
    for (int i = 0; i < 3; ++i) {
        double a = std::rand() / double(RAND_MAX) * 2 - 1;
        double b = std::rand() / double(RAND_MAX) * 2 - 1;
        f << a << ',' << b << ",0.04\n";
    }
    return path;
}

}  // namespace

TEST_CASE("cli predict commands emit parseable intervals") {
    if (cli_bin().empty()) {
        SKIP("CMA_CLI_BIN not set");
    }
    std::string train = write_trials(24, 101);
    std::string test = write_tests(102);

    auto eff = run_cli("predict-effect --trials " + train + " --test " + test +
                           " --alpha 0.1 --eta 0 --no-timestamp",
                       "eff");
    REQUIRE(eff.exit_code == 0);
    json j = json::parse(eff.out);
    REQUIRE(j["results"].size() == 3);
    for (const auto& r : j["results"]) {
        CHECK(r["method"] == "effect");
        double lo = endpoint_from_json(r["lower"]);
        double up = endpoint_from_json(r["upper"]);
        CHECK(lo <= up);
        CHECK(r["n"] == 24);
        CHECK(r["tau"] == 23);
    }

    auto tri = run_cli("predict-trial --trials " + train + " --test " + test +
                           " --alpha 0.1 --eta 1 --no-timestamp",
                       "tri");
    REQUIRE(tri.exit_code == 0);
    CHECK(json::parse(tri.out)["results"][0]["method"] == "trial");

    auto cle = run_cli("predict-clean-effect --trials " + train + " --test " + test +
                           " --alpha 0.1 --delta 0.05 --no-timestamp",
                       "cle");
    REQUIRE(cle.exit_code == 0);
    CHECK(json::parse(cle.out)["results"][0]["method"] == "clean-effect");

    // byte-identical reruns with --no-timestamp
    auto eff2 = run_cli("predict-effect --trials " + train + " --test " + test +
                            " --alpha 0.1 --eta 0 --no-timestamp",
                        "eff2");
    CHECK(eff.out == eff2.out);

    // csv format
    auto csv = run_cli("predict-effect --trials " + train + " --test " + test +
                           " --alpha 0.1 --format csv",
                       "csv");
    REQUIRE(csv.exit_code == 0);
    CHECK(csv.out.rfind("method,lower,upper", 0) == 0);

    std::remove(train.c_str());
    std::remove(test.c_str());
}

TEST_CASE("cli baseline and exit codes") {
    if (cli_bin().empty()) {
        SKIP("CMA_CLI_BIN not set");
    }
    std::string train = write_trials(12, 103);

    auto dl = run_cli("baseline --trials " + train + " --method dl --alpha 0.05 --no-timestamp",
                      "dl");
    REQUIRE(dl.exit_code == 0);
    json j = json::parse(dl.out);
    CHECK(j["method"] == "dl");
    CHECK(j["fit"].contains("nu_hat"));

    auto hksj = run_cli("baseline --trials " + train + " --method hksj --no-timestamp", "hksj");
    REQUIRE(hksj.exit_code == 0);
    CHECK(json::parse(hksj.out)["fit"]["converged"] == true);

    auto bay = run_cli("baseline --trials " + train + " --method bayes --v-new 0.2 --no-timestamp",
                       "bay");
    REQUIRE(bay.exit_code == 0);

    // invalid inputs exit 2
    auto bad = run_cli("baseline --trials /nonexistent.csv --method dl", "bad");
    CHECK(bad.exit_code == 2);
    auto badm = run_cli("baseline --trials " + train + " --method nope", "badm");
    CHECK(badm.exit_code == 2);

    std::remove(train.c_str());
}

TEST_CASE("cli convert feeds predict-trial identically") {
    if (cli_bin().empty()) {
        SKIP("CMA_CLI_BIN not set");
    }
    // two-arm summaries with a passthrough feature column
    std::string raw = std::string(std::tmpnam(nullptr)) + "_twoarm.csv";
    {
        std::ofstream f(raw);
        f << "x0,m0,mean0,var0,m1,mean1,var1\n";
        for (int i = 0; i < 10; ++i) {
            double x = i / 10.0;
            f << x << ",20," << 0.1 * i << ",2.0,25," << 0.1 * i + 0.5 << ",2.5\n";
        }
    }
    std::string converted = std::string(std::tmpnam(nullptr)) + "_conv.csv";
    auto conv = run_cli("convert --in " + raw + " --out-file " + converted, "conv");
    REQUIRE(conv.exit_code == 0);

    TrialTable t = load_trials(converted);
    REQUIRE(t.rows() == 10);
    CHECK(t.y(3) == Catch::Approx(0.5));
    CHECK(t.v(3) == Catch::Approx(2.0 / 20 + 2.5 / 25));

    // pre-converted input produces the identical interval
    std::string manual = std::string(std::tmpnam(nullptr)) + "_manual.csv";
    save_trials(manual, t);
    std::string test = std::string(std::tmpnam(nullptr)) + "_t.csv";
    {
        std::ofstream f(test);
        f << "x0,v\n0.55,0.2\n";
    }
    auto a = run_cli("predict-trial --trials " + converted + " --test " + test +
                         " --alpha 0.2 --eta 1 --no-timestamp",
                     "a");
    auto b = run_cli("predict-trial --trials " + manual + " --test " + test +
                         " --alpha 0.2 --eta 1 --no-timestamp",
                     "b");
    REQUIRE(a.exit_code == 0);
    CHECK(a.out == b.out);

    std::remove(raw.c_str());
    std::remove(converted.c_str());
    std::remove(manual.c_str());
    std::remove(test.c_str());
}

TEST_CASE("cli gram path and config fallback") {
    if (cli_bin().empty()) {
        SKIP("CMA_CLI_BIN not set");
    }
    // the n=1 hand instance through files: identity Gram, means 0, U = 2
    std::string train = std::string(std::tmpnam(nullptr)) + "_hand.csv";
    {
        std::ofstream f(train);
        f << "y,v,m\n2.0,0.0,0.0\n";
    }
    std::string gram = std::string(std::tmpnam(nullptr)) + "_gram.txt";
    {
        std::ofstream f(gram);
        f << "1\n1 0\n0 1\n";
    }
    auto tri = run_cli("predict-trial --trials " + train + " --kernel gram:" + gram +
                           " --alpha 0.6 --eta 0 --v-new 0 --no-timestamp",
                       "g");
    REQUIRE(tri.exit_code == 0);
    json j = json::parse(tri.out);
    CHECK(endpoint_from_json(j["results"][0]["lower"]) == Catch::Approx(-2.0));
    CHECK(endpoint_from_json(j["results"][0]["upper"]) == Catch::Approx(2.0));
    CHECK(j["results"][0]["lambda"] == 1.0);

    // predict-effect at this alpha cannot guarantee positive confidence
    auto infeasible = run_cli("predict-effect --trials " + train + " --kernel gram:" + gram +
                                  " --alpha 0.6 --eta 0",
                              "inf");
    CHECK(infeasible.exit_code == 2);

    // config file supplies alpha; explicit flag wins over config
    std::string cfg = std::string(std::tmpnam(nullptr)) + "_cfg.ini";
    {
        std::ofstream f(cfg);
        f << "alpha=0.6\neta=0\nv-new=0\nno-timestamp=true\n";
    }
    auto from_cfg = run_cli("predict-trial --trials " + train + " --kernel gram:" + gram +
                                " --config " + cfg,
                            "cfg1");
    REQUIRE(from_cfg.exit_code == 0);
    CHECK(json::parse(from_cfg.out)["results"][0]["alpha"] == 0.6);
    auto flag_wins = run_cli("predict-trial --trials " + train + " --kernel gram:" + gram +
                                 " --config " + cfg + " --alpha 0.5",
                             "cfg2");
    REQUIRE(flag_wins.exit_code == 0);
    CHECK(json::parse(flag_wins.out)["results"][0]["alpha"] == 0.5);

    std::remove(train.c_str());
    std::remove(gram.c_str());
    std::remove(cfg.c_str());
}

TEST_CASE("cli simulate runs and emits plot rows") {
    if (cli_bin().empty()) {
        SKIP("CMA_CLI_BIN not set");
    }
    auto sim = run_cli(
        "simulate --methods cma,fixed-prior --alpha 0.2 --effect-noise 0.1 --prior-error 0.3 "
        "--n-train 16 --n-test 4 --splits 3 --synth-rows 120 --seed 5 --no-timestamp",
        "sim");
    REQUIRE(sim.exit_code == 0);
    json j = json::parse(sim.out);
    CHECK(j["methods"].contains("effect"));
    CHECK(j["methods"].contains("fixed-prior"));
    CHECK(j["points"].size() == 2 * 3 * 4);
    auto sim_csv = run_cli(
        "simulate --methods cma --alpha 0.2 --n-train 12 --n-test 2 --splits 2 --synth-rows 100 "
        "--format csv",
        "simcsv");
    REQUIRE(sim_csv.exit_code == 0);
    CHECK(sim_csv.out.rfind("method,split,test_index,width,covered\n", 0) == 0);
}
