#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "cma/io.hpp"

using namespace cma;

namespace {

std::string tmp_path(const std::string& tag) {
    return std::string(std::tmpnam(nullptr)) + "_" + tag;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    f << text;
}

}  // namespace

TEST_CASE("two-arm conversion") {
    SECTION("identical arms give zero effect") {
        auto [y, v] = two_arm_to_effect(10, 1.5, 2.0, 12, 1.5, 3.0);
        CHECK(y == 0.0);
        CHECK(v == Catch::Approx(2.0 / 10 + 3.0 / 12));
    }
    SECTION("hand case") {
        auto [y, v] = two_arm_to_effect(10, 0.0, 5.0, 10, 1.2, 5.0);
        CHECK(y == Catch::Approx(1.2));
        CHECK(v == Catch::Approx(1.0));
    }
    SECTION("doubling both group sizes halves v") {
        auto [y1, v1] = two_arm_to_effect(10, 0.0, 5.0, 14, 1.2, 7.0);
        auto [y2, v2] = two_arm_to_effect(20, 0.0, 5.0, 28, 1.2, 7.0);
        CHECK(y1 == y2);
        CHECK(v2 == Catch::Approx(v1 / 2.0).epsilon(1e-15));
    }
    SECTION("group size below 2 is rejected") {
        CHECK_THROWS_AS(two_arm_to_effect(1, 0.0, 5.0, 10, 1.2, 5.0), invalid_input);
        CHECK_THROWS_AS(two_arm_to_effect(10, 0.0, -5.0, 10, 1.2, 5.0), invalid_input);
    }
}

TEST_CASE("trial file round trip is bit-identical") {
    std::string path = tmp_path("trials.csv");
    TrialTable t;
    t.feature_names = {"x0", "x1"};
    t.X.resize(3, 2);
    t.X << 0.1, -0.2, 0.30000000000000004, 1e-17, 3.0, 4.0;
    t.y.resize(3);
    t.y << 1.0 / 3.0, -2.5, 0.1;
    t.v.resize(3);
    t.v << 0.25, 0.5, 1e-12;
    save_trials(path, t);
    TrialTable r = load_trials(path);
    REQUIRE(r.rows() == 3);
    CHECK(r.feature_names == t.feature_names);
    CHECK((r.X - t.X).cwiseAbs().maxCoeff() == 0.0);
    CHECK((r.y - t.y).cwiseAbs().maxCoeff() == 0.0);
    CHECK((r.v - t.v).cwiseAbs().maxCoeff() == 0.0);
    CHECK(!r.m.has_value());

    // writing the reloaded table reproduces the file byte for byte
    std::string path2 = tmp_path("trials2.csv");
    save_trials(path2, r);
    std::ifstream f1(path), f2(path2);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("trial file diagnostics") {
    std::string path = tmp_path("bad.csv");

    SECTION("missing v column is named") {
        write_file(path, "x0,y\n1,2\n");
        try {
            load_trials(path);
            FAIL("expected invalid_input");
        } catch (const invalid_input& e) {
            CHECK(std::string(e.what()).find("'v'") != std::string::npos);
        }
    }
    SECTION("unparseable cell names line and column") {
        write_file(path, "x0,y,v\n1,2,0.5\n1,huh,0.5\n");
        try {
            load_trials(path);
            FAIL("expected invalid_input");
        } catch (const invalid_input& e) {
            std::string msg = e.what();
            CHECK(msg.find(":3") != std::string::npos);
            CHECK(msg.find("'y'") != std::string::npos);
        }
    }
    SECTION("non-finite value rejected with its line") {
        write_file(path, "x0,y,v\n1,nan,0.5\n");
        CHECK_THROWS_AS(load_trials(path), invalid_input);
    }
    SECTION("m column populates prior means") {
        write_file(path, "x0,y,v,m\n1,2,0.5,0.9\n2,1,0.5,-0.3\n");
        TrialTable t = load_trials(path);
        REQUIRE(t.m.has_value());
        CHECK((*t.m)(0) == 0.9);
        CHECK((*t.m)(1) == -0.3);
        CHECK(t.X.cols() == 1);
    }
    std::remove(path.c_str());
}

TEST_CASE("whitespace-delimited trials parse too") {
    std::string path = tmp_path("ws.txt");
    write_file(path, "x0 y v\n1 2 0.5\n3 4 0.25\n");
    TrialTable t = load_trials(path);
    CHECK(t.rows() == 2);
    CHECK(t.y(1) == 4.0);
    std::remove(path.c_str());
}

TEST_CASE("gram file round trip") {
    std::string path = tmp_path("gram.txt");
    MatrixXd K(3, 3);
    K << 1.0, 0.1234567890123456, 0.3, 0.1234567890123456, 2.0, 1e-17, 0.3, 1e-17, 0.5;
    save_gram(path, K);
    MatrixXd R = load_gram(path);
    CHECK((R - K).cwiseAbs().maxCoeff() == 0.0);
    std::remove(path.c_str());

    write_file(path, "2\n1 0 0\n0 1 0\n");  // truncated
    CHECK_THROWS_AS(load_gram(path), invalid_gram);
    std::remove(path.c_str());
}

TEST_CASE("dataset loader takes the last column as target") {
    std::string path = tmp_path("data.csv");
    write_file(path, "a,b,target\n1,2,3\n4,5,6\n");
    Dataset ds = load_dataset(path);
    CHECK(ds.X.rows() == 2);
    CHECK(ds.X.cols() == 2);
    CHECK(ds.U(0) == 3.0);
    CHECK(ds.U(1) == 6.0);
    std::remove(path.c_str());
}

TEST_CASE("infinity sentinels round trip through JSON") {
    PredictionInterval itv;  // (-inf, +inf)
    itv.method = Method::effect;
    itv.nominal_alpha = 0.05;
    itv.effective_confidence = 0.9473684210526315;
    json j = interval_json(itv, 10, 1.0, 11);
    CHECK(j["lower"] == "-inf");
    CHECK(j["upper"] == "+inf");
    CHECK(endpoint_from_json(j["lower"]) == -kInf);
    CHECK(endpoint_from_json(j["upper"]) == kInf);

    itv.lower = -1.0 / 3.0;
    itv.upper = 0.30000000000000004;
    json j2 = interval_json(itv, 10, 1.0, 9);
    std::string text = j2.dump();
    json parsed = json::parse(text);
    CHECK(endpoint_from_json(parsed["lower"]) == itv.lower);
    CHECK(endpoint_from_json(parsed["upper"]) == itv.upper);
}

TEST_CASE("17-digit text round trip is exact") {
    for (double x : {1.0 / 3.0, 0.1, 1e-300, 12345.678901234567, -0.30000000000000004}) {
        double parsed = 0.0;
        REQUIRE(detail::parse_double(detail::fmt17(x), parsed));
        CHECK(parsed == x);
    }
    CHECK(detail::fmt17(kInf) == "+inf");
    CHECK(detail::fmt17(-kInf) == "-inf");
}

TEST_CASE("report serialization is deterministic") {
    Dataset data = synth_dataset(80, 2, KernelSpec::gaussian(0.8), 11);
    SimConfig cfg;
    cfg.n_train = 12;
    cfg.n_test = 4;
    cfg.n_splits = 2;
    cfg.n_heldout = 8;
    cfg.alpha = 0.25;
    cfg.methods = {Method::effect, Method::fixed_prior};
    cfg.seed = 7;
    CoverageReport rep = run_simulation(cfg, data);
    CHECK(report_json(rep, cfg).dump() == report_json(run_simulation(cfg, data), cfg).dump());
    std::string csv = report_csv(rep);
    CHECK(csv.rfind("method,split,test_index,width,covered\n", 0) == 0);
}
