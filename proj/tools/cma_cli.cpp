// Command-line surface for conformal meta-analysis: prediction commands,
// classical baselines, the simulation harness, and two-arm conversion.

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cma/conformal.hpp"
#include "cma/io.hpp"
#include "cma/meta.hpp"

namespace {

using namespace cma;

struct CommonOpts {
    double alpha = 0.05;
    double eta = 0.0;
    double delta = 0.05;
    std::string kernel = "gaussian";
    double lengthscale = 1.0;
    std::optional<double> lambda;
    std::string out;
    std::string format = "json";
    bool no_timestamp = false;
    std::string config_path;
};

// key = value fallback for any flag the command line left unset; explicit
// flags win.  Lines starting with # are comments.
void apply_config_file(CLI::App* cmd, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config file " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = line.substr(0, line.find('#'));
        auto eq = s.find('=');
        if (s.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (eq == std::string::npos)
            throw invalid_input(path + ":" + std::to_string(lineno) + ": expected key = value");
        auto trim = [](std::string t) {
            t.erase(0, t.find_first_not_of(" \t\r"));
            t.erase(t.find_last_not_of(" \t\r") + 1);
            return t;
        };
        std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));
        CLI::Option* o = cmd->get_option_no_throw("--" + key);
        if (o == nullptr)
            throw invalid_input(path + ":" + std::to_string(lineno) + ": unknown key '" + key +
                                "' for this command");
        if (o->count() > 0) continue;  // flag wins
        o->add_result(value);
        o->run_callback();
    }
}

KernelSpec make_kernel(const CommonOpts& opt) {
    if (opt.kernel == "gaussian") return KernelSpec::gaussian(opt.lengthscale);
    if (opt.kernel == "laplace") return KernelSpec::laplace(opt.lengthscale);
    if (opt.kernel.rfind("gram:", 0) == 0) return KernelSpec::gram(opt.kernel.substr(5));
    throw invalid_input("unknown kernel: " + opt.kernel + " (use gaussian|laplace|gram:PATH)");
}

void write_output(const CommonOpts& opt, const std::string& text) {
    if (opt.out.empty() || opt.out == "-") {
        std::cout << text;
        return;
    }
    std::ofstream f(opt.out);
    if (!f) throw io_error("cannot write " + opt.out);
    f << text;
    if (!f) throw io_error("write failed: " + opt.out);
}

void maybe_stamp(json& j, const CommonOpts& opt) {
    if (opt.no_timestamp) return;
    std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    j["timestamp"] = buf;
}

void add_common(CLI::App* cmd, CommonOpts& opt) {
    cmd->add_option("--config", opt.config_path, "key/value config file; explicit flags win");
    cmd->add_option("--alpha", opt.alpha, "miscoverage level in (0,1)");
    cmd->add_option("--kernel", opt.kernel, "gaussian | laplace | gram:PATH");
    cmd->add_option("--lengthscale", opt.lengthscale, "kernel lengthscale");
    cmd->add_option_function<double>(
        "--lambda", [&opt](double v) { opt.lambda = v; },
        "ridge override (>= max diag of the augmented Gram unless idiocentricity verifies)");
    cmd->add_option("--out", opt.out, "output path (default stdout)");
    cmd->add_option("--format", opt.format, "json | csv")
        ->check(CLI::IsMember({"json", "csv"}));
    cmd->add_flag("--no-timestamp", opt.no_timestamp, "suppress the timestamp field");
}

// Training data plus test points resolved from files; the precomputed-Gram
// path carries exactly one test point described by the Gram file itself.
struct PredictInputs {
    VectorXd Y;
    VectorXd V;
    std::vector<PriorBundle> bundles;
    std::vector<double> test_v;
};

PredictInputs load_predict_inputs(const std::string& trials_path, const std::string& test_path,
                                  const CommonOpts& opt, double test_mean, double v_new,
                                  bool need_test_v) {
    PredictInputs in;
    TrialTable train = load_trials(trials_path);
    in.Y = train.y;
    in.V = train.v;
    KernelSpec kernel = make_kernel(opt);

    if (kernel.kind == KernelKind::precomputed_gram) {
        MatrixXd Kbar = load_gram(kernel.gram_source);
        if (Kbar.rows() != train.rows() + 1)
            throw invalid_input("Gram size does not match the trials file");
        VectorXd means(train.rows() + 1);
        means.head(train.rows()) = train.m ? *train.m : VectorXd::Zero(train.rows());
        means(train.rows()) = test_mean;
        in.bundles.push_back(assemble_prior_gram(means, Kbar));
        in.test_v.push_back(v_new);
        return in;
    }

    if (test_path.empty()) throw invalid_input("--test FILE is required for analytic kernels");
    TrialTable test = load_trials(test_path, /*require_y=*/false, /*require_v=*/need_test_v);
    if (test.X.cols() != train.X.cols())
        throw invalid_input("train/test feature columns do not match");
    for (Index t = 0; t < test.rows(); ++t) {
        VectorXd means(train.rows() + 1);
        means.head(train.rows()) = train.m ? *train.m : VectorXd::Zero(train.rows());
        means(train.rows()) = test.m ? (*test.m)(t) : test_mean;
        in.bundles.push_back(assemble_prior(means, kernel, train.X, test.X.row(t)));
        in.test_v.push_back(need_test_v ? test.v(t) : v_new);
    }
    return in;
}

int run_predict(Method method, const std::string& trials_path, const std::string& test_path,
                const CommonOpts& opt, double test_mean, double v_new) {
    PredictInputs in = load_predict_inputs(trials_path, test_path, opt, test_mean, v_new,
                                           method == Method::trial && test_path.size());
    json results = json::array();
    std::string csv;
    for (size_t t = 0; t < in.bundles.size(); ++t) {
        Precomputation pre = precompute(in.bundles[t], in.Y, opt.alpha, opt.lambda);
        PredictionInterval itv;
        switch (method) {
            case Method::effect: itv = predict_effect(pre, in.V, opt.eta); break;
            case Method::trial: itv = predict_trial(pre, in.V, in.test_v[t], opt.eta); break;
            case Method::clean_effect: itv = predict_clean_effect(pre, in.V, opt.delta); break;
            default: throw invalid_input("bad predict method");
        }
        results.push_back(interval_json(itv, pre.n, pre.lambda, pre.tau));
        csv += interval_csv(itv, pre.n, pre.lambda, pre.tau);
    }
    if (opt.format == "csv") {
        write_output(opt, csv);
    } else {
        json j;
        j["results"] = results;
        maybe_stamp(j, opt);
        write_output(opt, j.dump(2) + "\n");
    }
    return 0;
}

int run_baseline(const std::string& trials_path, const std::string& method_name,
                 const CommonOpts& opt, double v_new, std::optional<double> nu_plugin) {
    TrialTable train = load_trials(trials_path);
    Method m = parse_method(method_name);
    PredictionInterval itv;
    json extra;
    if (m == Method::dersimonian_laird) {
        auto [fit, i] = dersimonian_laird(train.y, train.v, opt.alpha);
        itv = i;
        extra["nu_hat"] = fit.nu_hat;
        extra["ate_hat"] = fit.ate_hat;
        extra["var_ate_hat"] = fit.var_ate_hat;
    } else if (m == Method::reml_hksj) {
        auto [fit, i] = reml_hksj(train.y, train.v, opt.alpha);
        itv = i;
        extra["nu_hat"] = fit.nu_hat;
        extra["ate_hat"] = fit.ate_hat;
        extra["var_ate_hat"] = fit.var_ate_hat;
        extra["iterations"] = fit.iterations;
        extra["converged"] = fit.converged;
    } else if (m == Method::bayes) {
        double nu = nu_plugin ? *nu_plugin : reml_hksj(train.y, train.v, opt.alpha).first.nu_hat;
        itv = bayesian_trial(train.y, train.v, v_new, opt.alpha, nu);
        extra["nu_plugin"] = nu;
    } else {
        throw invalid_input("baseline method must be dl, hksj, or bayes");
    }
    if (opt.format == "csv") {
        write_output(opt, interval_csv(itv, train.rows(), 0.0, 0));
    } else {
        json j = interval_json(itv, train.rows(), 0.0, 0);
        j["lambda"] = nullptr;
        j["tau"] = nullptr;
        j["fit"] = extra;
        maybe_stamp(j, opt);
        write_output(opt, j.dump(2) + "\n");
    }
    return 0;
}

int run_simulate(CommonOpts& opt, SimConfig& cfg, const std::string& data_path, long synth_rows,
                 long synth_dim, const std::string& methods_csv) {
    cfg.alpha = opt.alpha;
    cfg.eta = opt.eta;
    cfg.delta = opt.delta;
    cfg.kernel = make_kernel(opt);
    cfg.methods.clear();
    std::stringstream ss(methods_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) cfg.methods.push_back(parse_method(tok));
    }
    Dataset data = data_path.empty()
                       ? synth_dataset(synth_rows, synth_dim, cfg.kernel, cfg.seed + 1)
                       : load_dataset(data_path);
    CoverageReport report = run_simulation(cfg, data);
    if (opt.format == "csv") {
        write_output(opt, report_csv(report));
    } else {
        json j = report_json(report, cfg);
        maybe_stamp(j, opt);
        write_output(opt, j.dump(2) + "\n");
    }
    return 0;
}

int run_convert(const std::string& in_path, const std::string& out_path) {
    // Expect two-arm summary columns; everything else passes through as
    // features of the emitted trial file.
    std::ifstream in(in_path);
    if (!in) throw io_error("cannot open " + in_path);
    std::string line;
    if (!std::getline(in, line)) throw invalid_input(in_path + ": empty file");
    auto header = detail::split_fields(line);
    auto col = [&](const std::string& name) {
        for (size_t c = 0; c < header.size(); ++c)
            if (header[c] == name) return static_cast<int>(c);
        throw invalid_input(in_path + ": missing required column '" + name + "'");
    };
    int c_m0 = col("m0"), c_mean0 = col("mean0"), c_var0 = col("var0");
    int c_m1 = col("m1"), c_mean1 = col("mean1"), c_var1 = col("var1");
    std::vector<int> feat_cols;
    std::vector<std::string> feat_names;
    for (size_t c = 0; c < header.size(); ++c) {
        int ci = static_cast<int>(c);
        if (ci == c_m0 || ci == c_mean0 || ci == c_var0 || ci == c_m1 || ci == c_mean1 ||
            ci == c_var1)
            continue;
        feat_cols.push_back(ci);
        feat_names.push_back(header[c]);
    }

    std::vector<std::vector<double>> feats;
    std::vector<double> ys, vs;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        auto fields = detail::split_fields(line);
        if (fields.empty()) continue;
        if (fields.size() != header.size())
            throw invalid_input(in_path + ":" + std::to_string(lineno) + ": ragged row");
        std::vector<double> vals(fields.size());
        for (size_t c = 0; c < fields.size(); ++c)
            if (!detail::parse_double(fields[c], vals[c]))
                throw invalid_input(in_path + ":" + std::to_string(lineno) + ": column '" +
                                    header[c] + "': cannot parse '" + fields[c] + "'");
        auto [y, v] = two_arm_to_effect(static_cast<long>(vals[c_m0]), vals[c_mean0],
                                        vals[c_var0], static_cast<long>(vals[c_m1]),
                                        vals[c_mean1], vals[c_var1]);
        std::vector<double> row;
        for (int fc : feat_cols) row.push_back(vals[fc]);
        feats.push_back(row);
        ys.push_back(y);
        vs.push_back(v);
    }
    TrialTable out_table;
    out_table.feature_names = feat_names;
    Index n = static_cast<Index>(ys.size());
    out_table.X.resize(n, static_cast<Index>(feat_cols.size()));
    out_table.y.resize(n);
    out_table.v.resize(n);
    for (Index i = 0; i < n; ++i) {
        for (size_t f = 0; f < feat_cols.size(); ++f) out_table.X(i, f) = feats[i][f];
        out_table.y(i) = ys[i];
        out_table.v(i) = vs[i];
    }
    save_trials(out_path, out_table);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"conformal meta-analysis: rigorous prediction intervals for causal effects"};
    app.require_subcommand(1);

    CommonOpts opt;
    std::string trials_path, test_path, data_path, in_path, out_path, baseline_method;
    std::string methods_csv = "effect";
    double test_mean = 0.0, v_new = 0.0;
    std::optional<double> nu_plugin;
    SimConfig cfg;
    long synth_rows = 512, synth_dim = 2;

    auto* eff = app.add_subcommand("predict-effect", "interval for the true effect (shaving)");
    auto* tri = app.add_subcommand("predict-trial", "interval for a new trial's observed effect");
    auto* cle = app.add_subcommand("predict-clean-effect",
                                   "interval for the true effect (worst-case noise)");
    for (CLI::App* cmd : {eff, tri, cle}) {
        add_common(cmd, opt);
        cmd->add_option("--trials", trials_path, "training trial file")->required();
        cmd->add_option("--test", test_path, "test-point file (features, optional m/v)");
        cmd->add_option("--test-mean", test_mean, "prior mean at the test point (gram path)");
    }
    eff->add_option("--eta", opt.eta, "noise-correction multiplier");
    tri->add_option("--eta", opt.eta, "noise-correction multiplier");
    tri->add_option("--v-new", v_new, "new trial's within-trial variance (gram path)");
    cle->add_option("--delta", opt.delta, "noise-ellipsoid tail mass");

    auto* bas = app.add_subcommand("baseline", "classical random-effects intervals");
    add_common(bas, opt);
    bas->add_option("--trials", trials_path, "training trial file")->required();
    bas->add_option("--method", baseline_method, "dl | hksj | bayes")->required();
    bas->add_option("--v-new", v_new, "new trial's variance (bayes)");
    bas->add_option_function<double>(
        "--nu-plugin", [&nu_plugin](double v) { nu_plugin = v; },
        "plug-in heterogeneity (bayes; default REML estimate)");

    auto* sim = app.add_subcommand("simulate", "coverage/width experiment runner");
    add_common(sim, opt);
    sim->add_option("--eta", opt.eta, "noise-correction multiplier");
    sim->add_option("--delta", opt.delta, "noise-ellipsoid tail mass");
    sim->add_option("--data", data_path, "dataset file (last column = target)");
    sim->add_option("--synth-rows", synth_rows, "synthetic dataset rows");
    sim->add_option("--synth-dim", synth_dim, "synthetic dataset feature dimension");
    sim->add_option("--methods", methods_csv, "comma list: cma,cma-clean,trial,dl,hksj,bayes,fixed-prior");
    sim->add_option("--effect-noise", cfg.effect_noise, "within-trial variance dial");
    sim->add_option("--prior-error", cfg.prior_error, "prior inaccuracy dial");
    sim->add_option("--n-train", cfg.n_train, "training trials per split");
    sim->add_option("--n-test", cfg.n_test, "test points per split");
    sim->add_option("--n-heldout", cfg.n_heldout, "held-out rows for the prior offset");
    sim->add_option("--splits", cfg.n_splits, "number of random splits");
    sim->add_option("--seed", cfg.seed, "root RNG seed");

    auto* con = app.add_subcommand("convert", "two-arm summaries -> trial file (y, v)");
    con->add_option("--in", in_path, "two-arm summary file")->required();
    con->add_option("--out-file", out_path, "converted trial file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (!opt.config_path.empty())
            for (CLI::App* cmd : {eff, tri, cle, bas, sim})
                if (app.got_subcommand(cmd)) apply_config_file(cmd, opt.config_path);
        if (app.got_subcommand(eff))
            return run_predict(Method::effect, trials_path, test_path, opt, test_mean, v_new);
        if (app.got_subcommand(tri))
            return run_predict(Method::trial, trials_path, test_path, opt, test_mean, v_new);
        if (app.got_subcommand(cle))
            return run_predict(Method::clean_effect, trials_path, test_path, opt, test_mean,
                               v_new);
        if (app.got_subcommand(bas))
            return run_baseline(trials_path, baseline_method, opt, v_new, nu_plugin);
        if (app.got_subcommand(sim))
            return run_simulate(opt, cfg, data_path, synth_rows, synth_dim, methods_csv);
        if (app.got_subcommand(con)) return run_convert(in_path, out_path);
    } catch (const invalid_input& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const numerical_failure& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const io_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
