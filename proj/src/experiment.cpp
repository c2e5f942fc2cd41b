#include "imiwae/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "imiwae/checkpoint.hpp"
#include "imiwae/cross_validation.hpp"
#include "imiwae/csv.hpp"
#include "imiwae/datagen.hpp"
#include "imiwae/errors.hpp"
#include "imiwae/imputer.hpp"
#include "imiwae/metrics.hpp"
#include "imiwae/missingness.hpp"
#include "imiwae/theory.hpp"
#include "imiwae/trainer.hpp"
#include "imiwae/version.hpp"

namespace imiwae {

using nlohmann::json;

namespace {

uint64_t splitmix(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

json default_config() {
    json j;
    j["experiment"] = "";
    j["replications"] = 1;
    j["base_seed"] = 1;
    j["output_dir"] = "runs";
    j["notes"] = json::array();
    j["reference_values"] = json::object();
    j["datagen"] = {{"kind", "latent_factor"}, {"n", 5000},         {"p", 3},
                    {"q1", 3},                 {"noise_std", 0.1},  {"hidden_width", 8}};
    j["missingness"] = {{"mechanism", "latent"},
                        {"linearity", "linear"},
                        {"self_censoring_allowed", false},
                        {"latent_dim", 1},
                        {"group_size", 1},
                        {"target_lo", 0.30},
                        {"target_hi", 0.40},
                        {"hidden_width", 8}};
    j["model"] = {{"kappa1", 3},          {"kappa2", 1},
                  {"hidden", 128},        {"hidden_layers", 2},
                  {"miss_hidden", 128},   {"miss_linearity", "linear"},
                  {"no_self_censoring", true},
                  {"K", 20},              {"gamma_init", 0.25},
                  {"mask_channel", false}};
    j["train"] = {{"batch_size", 16},           {"learning_rate", 0.001},
                  {"max_epochs", 10000},        {"optimizer", "adam"},
                  {"convergence_window", 200},  {"convergence_tol", 1e-4},
                  {"checkpoint_every", 50},     {"verbose", false}};
    j["impute"] = {{"B", 10000}, {"mode", "mnar"}};
    j["eval"] = {{"standardize", true},
                 {"bootstrap_reps", 1000},
                 {"mmd_max_n", 2000},
                 {"mean_column", 2}};
    j["cv"] = {{"candidates", json::array({1, 2, 3, 4, 5})},
               {"folds", 5},
               {"mask_fraction", 0.2},
               {"impute_B", 1000}};
    j["theory"] = {{"checks", json::array({"monotone", "bias_variance", "convergence", "lemma1"})},
                   {"law", {{"family", "lognormal"}, {"mu0", 0.0}, {"sigma", 0.5}}},
                   {"monotone_Ks", json::array({1, 2, 5, 20, 100, 1000})},
                   {"monotone_reps", 100000},
                   {"bias_variance_Ks", json::array({100, 300, 1000})},
                   {"bias_variance_reps", 1000000},
                   {"convergence_K_grid", json::array({10, 100, 1000, 10000})},
                   {"convergence_epsilon", 0.05},
                   {"convergence_trials", 100000},
                   {"lemma1_trials", 100},
                   {"lemma1_grid", 10000}};
    j["io"] = {{"data_csv", ""},  {"imputed_out", ""}, {"checkpoint", ""},
               {"ess_out", ""},   {"generated_out", ""}, {"generate_n", 1000}};
    return j;
}

void deep_merge(json& base, const json& overlay) {
    for (auto it = overlay.begin(); it != overlay.end(); ++it) {
        if (it->is_object() && base.contains(it.key()) && base[it.key()].is_object())
            deep_merge(base[it.key()], *it);
        else
            base[it.key()] = *it;
    }
}

const std::vector<std::string> kKinds = {"simulate-impute", "mixture-mean", "cv-select",
                                         "theory",          "impute-csv",   "generate"};

void check_number(const json& section, const std::string& where, const std::string& key,
                  double lo, double hi, std::vector<std::string>& errors) {
    if (!section.contains(key)) return;
    if (!section[key].is_number()) {
        errors.push_back(where + "." + key + " must be a number");
        return;
    }
    double v = section[key].get<double>();
    if (v < lo || v > hi)
        errors.push_back(where + "." + key + " = " + std::to_string(v) + " outside [" +
                         std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

void check_enum(const json& section, const std::string& where, const std::string& key,
                const std::vector<std::string>& allowed, std::vector<std::string>& errors) {
    if (!section.contains(key)) return;
    if (!section[key].is_string()) {
        errors.push_back(where + "." + key + " must be a string");
        return;
    }
    std::string v = section[key].get<std::string>();
    for (const auto& a : allowed)
        if (v == a) return;
    std::string opts;
    for (const auto& a : allowed) opts += (opts.empty() ? "" : "|") + a;
    errors.push_back(where + "." + key + " = '" + v + "' not one of {" + opts + "}");
}

MissingnessSpec missingness_from(const json& m, uint64_t seed) {
    MissingnessSpec spec;
    spec.mechanism = mechanism_from_string(m.at("mechanism").get<std::string>());
    spec.linearity = linearity_from_string(m.at("linearity").get<std::string>());
    spec.self_censoring_allowed = m.at("self_censoring_allowed").get<bool>();
    spec.latent_dim = m.at("latent_dim").get<int>();
    spec.group_size = m.at("group_size").get<int>();
    spec.target_lo = m.at("target_lo").get<double>();
    spec.target_hi = m.at("target_hi").get<double>();
    spec.hidden_width = m.at("hidden_width").get<int>();
    spec.seed = seed;
    return spec;
}

ModelConfig model_from(const json& m, int p) {
    ModelConfig cfg;
    cfg.p = p;
    cfg.kappa1 = m.at("kappa1").get<int>();
    cfg.kappa2 = m.at("kappa2").get<int>();
    cfg.hidden = m.at("hidden").get<int>();
    cfg.hidden_layers = m.at("hidden_layers").get<int>();
    cfg.miss_hidden = m.at("miss_hidden").get<int>();
    cfg.miss_linearity = linearity_from_string(m.at("miss_linearity").get<std::string>());
    cfg.no_self_censoring = m.at("no_self_censoring").get<bool>();
    cfg.K = m.at("K").get<int>();
    cfg.gamma_init = m.at("gamma_init").get<double>();
    cfg.mask_channel = m.at("mask_channel").get<bool>();
    return cfg;
}

TrainConfig train_from_json(const json& t, uint64_t seed) {
    TrainConfig cfg;
    cfg.batch_size = t.at("batch_size").get<int>();
    cfg.learning_rate = t.at("learning_rate").get<double>();
    cfg.max_epochs = t.at("max_epochs").get<int>();
    cfg.optimizer = t.at("optimizer").get<std::string>();
    cfg.convergence_window = t.at("convergence_window").get<int>();
    cfg.convergence_tol = t.at("convergence_tol").get<double>();
    cfg.checkpoint_every = t.at("checkpoint_every").get<int>();
    cfg.verbose = t.at("verbose").get<bool>();
    cfg.seed = seed;
    return cfg;
}

ImputeConfig impute_from(const json& i, uint64_t seed) {
    ImputeConfig cfg;
    cfg.B = i.at("B").get<int>();
    cfg.mode = impute_mode_from_string(i.at("mode").get<std::string>());
    cfg.seed = seed;
    return cfg;
}

DataTable subset_rows(const DataTable& t, const std::vector<Eigen::Index>& rows) {
    DataTable out;
    out.column_names = t.column_names;
    out.values.resize(static_cast<Eigen::Index>(rows.size()), t.cols());
    out.mask.resize(static_cast<Eigen::Index>(rows.size()), t.cols());
    for (size_t i = 0; i < rows.size(); ++i) {
        out.values.row(i) = t.values.row(rows[i]);
        out.mask.row(i) = t.mask.row(rows[i]);
    }
    return out;
}

double mean_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

// ---------------------------------------------------------------------------
// simulate-impute: latent-factor data, MNAR mask, train, impute, score
// ---------------------------------------------------------------------------

json run_simulate_impute_rep(const json& cfg, int rep) {
    const uint64_t base = cfg.at("base_seed").get<uint64_t>();
    const json& dg = cfg.at("datagen");
    const json& ev = cfg.at("eval");
    const int mmd_n = ev.at("mmd_max_n").get<int>();

    LatentFactorSpec dspec;
    dspec.n = dg.at("n").get<Eigen::Index>() + mmd_n;  // tail rows = held-out reference sample
    dspec.p = dg.at("p").get<int>();
    dspec.q1 = dg.at("q1").get<int>();
    dspec.noise_std = dg.at("noise_std").get<double>();
    dspec.hidden_width = dg.at("hidden_width").get<int>();
    dspec.seed = derive_seed(base, rep, 1);

    DataTable all = gen_latent_factor_data(dspec);
    const Eigen::Index n = dg.at("n").get<Eigen::Index>();
    std::vector<Eigen::Index> head(n), tail;
    std::iota(head.begin(), head.end(), 0);
    for (Eigen::Index i = n; i < all.rows(); ++i) tail.push_back(i);
    DataTable truth = subset_rows(all, head);
    DataTable reference = subset_rows(all, tail);

    MissingnessSpec mspec = missingness_from(cfg.at("missingness"), derive_seed(base, rep, 2));
    double offset_value = 0.0;
    DataTable masked;
    if (mspec.mechanism == Mechanism::self_censoring) {
        masked = apply_self_censoring(truth);
    } else {
        LogitOffset offset = calibrate_offset(truth, mspec);
        offset_value = offset.value;
        switch (mspec.mechanism) {
            case Mechanism::latent: masked = apply_latent_mechanism(truth, mspec, offset); break;
            case Mechanism::threshold:
                masked = apply_threshold_mechanism(truth, mspec, offset);
                break;
            case Mechanism::blockwise: masked = apply_blockwise(truth, mspec, offset); break;
            default: throw SpecError("unexpected mechanism");
        }
    }

    // drop fully missing rows from both sides, keeping alignment
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < masked.rows(); ++i)
        if (!masked.row_fully_missing(i)) keep.push_back(i);
    const Eigen::Index dropped = masked.rows() - static_cast<Eigen::Index>(keep.size());
    DataTable masked_kept = subset_rows(masked, keep);
    DataTable truth_kept = subset_rows(truth, keep);

    const bool standardize_flag = ev.at("standardize").get<bool>();
    ColumnStats stats;
    DataTable work = masked_kept;
    Eigen::MatrixXd truth_std = truth_kept.values;
    if (standardize_flag) {
        StandardizeResult sr = standardize(masked_kept);
        work = sr.table;
        stats = sr.stats;
        truth_std = standardize_values(truth_kept.values, stats);
    }

    ModelConfig mc = model_from(cfg.at("model"), static_cast<int>(work.cols()));
    TrainConfig tc = train_from_json(cfg.at("train"), derive_seed(base, rep, 3));
    ImputeConfig ic = impute_from(cfg.at("impute"), derive_seed(base, rep, 4));

    ModelParams untrained = initial_params(mc, tc);
    TrainResult trained = train_from(untrained, work, tc);
    if (trained.aborted)
        throw NumericError("training aborted in replication " + std::to_string(rep) + ": " +
                           trained.diagnostic);

    ImputedTable imp_trained = impute(trained.params, work, ic);
    ImputedTable imp_untrained = impute(untrained, work, ic);
    DataTable colmean = impute_column_mean(work);

    json metrics;
    metrics["rmse_trained"] = imputation_rmse(truth_std, imp_trained.table.values, masked_kept.mask);
    metrics["rmse_untrained"] =
        imputation_rmse(truth_std, imp_untrained.table.values, masked_kept.mask);
    metrics["rmse_column_mean"] = imputation_rmse(truth_std, colmean.values, masked_kept.mask);
    if (standardize_flag) {
        Eigen::MatrixXd imp_raw = destandardize_values(imp_trained.table.values, stats);
        metrics["rmse_trained_raw"] =
            imputation_rmse(truth_kept.values, imp_raw, masked_kept.mask);
    } else {
        metrics["rmse_trained_raw"] = metrics["rmse_trained"];
    }

    // MMD of generated data and of the complete cases against the held-out
    // reference sample from the same generating process.
    DataTable generated = generate(trained.params, mmd_n, derive_seed(base, rep, 5));
    Eigen::MatrixXd gen_values = generated.values;
    if (standardize_flag) gen_values = destandardize_values(gen_values, stats);

    std::vector<Eigen::Index> cc_rows;
    for (Eigen::Index i = 0; i < masked_kept.rows(); ++i)
        if (masked_kept.mask.row(i).sum() == masked_kept.cols()) cc_rows.push_back(i);
    if (cc_rows.size() > static_cast<size_t>(mmd_n)) cc_rows.resize(mmd_n);

    metrics["mmd2_generated"] = mmd_squared(gen_values.topRows(std::min<Eigen::Index>(mmd_n, n)),
                                            reference.values);
    metrics["complete_case_rows"] = static_cast<double>(cc_rows.size());
    if (cc_rows.size() >= 2) {
        DataTable cc = subset_rows(truth_kept, cc_rows);
        metrics["mmd2_complete_case"] = mmd_squared(cc.values, reference.values);
    }

    metrics["missing_rate"] = surviving_missing_rate(masked_kept);
    metrics["calibrated_offset"] = offset_value;
    metrics["rows_dropped_fully_missing"] = static_cast<double>(dropped);
    metrics["epochs_run"] = static_cast<double>(trained.trace.epochs_run);
    metrics["final_neg_lhat"] = trained.trace.epoch_neg_lhat.back();
    metrics["gamma"] = trained.params.gamma();
    double ess_frac = 0.0;
    Eigen::Index ess_rows = 0;
    for (Eigen::Index i = 0; i < masked_kept.rows(); ++i) {
        if (masked_kept.mask.row(i).sum() == masked_kept.cols()) continue;
        ess_frac += imp_trained.ess[i] / ic.B;
        ++ess_rows;
    }
    metrics["mean_ess_fraction"] = ess_rows > 0 ? ess_frac / ess_rows : 1.0;
    return metrics;
}

// ---------------------------------------------------------------------------
// mixture-mean: Gaussian-mixture data, mean recovery for one column
// ---------------------------------------------------------------------------

json run_mixture_mean_rep(const json& cfg, int rep) {
    const uint64_t base = cfg.at("base_seed").get<uint64_t>();
    const json& dg = cfg.at("datagen");
    const json& ev = cfg.at("eval");
    const int col = ev.at("mean_column").get<int>();

    GaussianMixtureSpec spec =
        GaussianMixtureSpec::reference(dg.at("n").get<Eigen::Index>(), derive_seed(base, rep, 1));
    DataTable full = gen_gaussian_mixture(spec);
    const double truth_mean = gaussian_mixture_mean(spec)[col];

    DataTable train_table = full.drop_fully_missing();
    StandardizeResult sr = standardize(train_table);

    ModelConfig mc = model_from(cfg.at("model"), 3);
    TrainConfig tc = train_from_json(cfg.at("train"), derive_seed(base, rep, 2));
    ImputeConfig ic = impute_from(cfg.at("impute"), derive_seed(base, rep, 3));

    TrainResult trained = train(sr.table, mc, tc);
    if (trained.aborted)
        throw NumericError("training aborted in replication " + std::to_string(rep) + ": " +
                           trained.diagnostic);

    // impute every row, including the fully missing ones
    DataTable full_std = full;
    full_std.values = standardize_values(full.values, sr.stats);
    ImputedTable imputed = impute(trained.params, full_std, ic);
    Eigen::MatrixXd completed = destandardize_values(imputed.table.values, sr.stats);

    DataTable generated = generate(trained.params, full.rows(), derive_seed(base, rep, 4));
    Eigen::MatrixXd gen_raw = destandardize_values(generated.values, sr.stats);

    std::vector<double> cc_values;
    for (Eigen::Index i = 0; i < full.rows(); ++i)
        if (full.mask(i, col) == 1) cc_values.push_back(full.values(i, col));
    Eigen::VectorXd cc = Eigen::Map<Eigen::VectorXd>(cc_values.data(), cc_values.size());

    const int boot = ev.at("bootstrap_reps").get<int>();
    MeanCi est_imputed =
        mean_estimate_with_ci(completed.col(col), boot, derive_seed(base, rep, 5));
    MeanCi est_generated =
        mean_estimate_with_ci(gen_raw.col(col), boot, derive_seed(base, rep, 6));
    MeanCi est_cc = mean_estimate_with_ci(cc, boot, derive_seed(base, rep, 7));

    json metrics;
    metrics["truth_mean"] = truth_mean;
    metrics["est_imputed"] = est_imputed.estimate;
    metrics["est_imputed_ci_lo"] = est_imputed.lo;
    metrics["est_imputed_ci_hi"] = est_imputed.hi;
    metrics["est_generated"] = est_generated.estimate;
    metrics["est_generated_ci_lo"] = est_generated.lo;
    metrics["est_generated_ci_hi"] = est_generated.hi;
    metrics["est_complete_case"] = est_cc.estimate;
    metrics["abs_err_imputed"] = std::abs(est_imputed.estimate - truth_mean);
    metrics["abs_err_generated"] = std::abs(est_generated.estimate - truth_mean);
    metrics["abs_err_complete_case"] = std::abs(est_cc.estimate - truth_mean);
    metrics["truth_in_imputed_ci"] =
        (truth_mean >= est_imputed.lo && truth_mean <= est_imputed.hi) ? 1.0 : 0.0;
    metrics["truth_in_generated_ci"] =
        (truth_mean >= est_generated.lo && truth_mean <= est_generated.hi) ? 1.0 : 0.0;
    metrics["rows_fully_missing"] = static_cast<double>(full.count_fully_missing());
    metrics["epochs_run"] = static_cast<double>(trained.trace.epochs_run);
    metrics["final_neg_lhat"] = trained.trace.epoch_neg_lhat.back();
    metrics["gamma"] = trained.params.gamma();
    return metrics;
}

// ---------------------------------------------------------------------------
// cv-select: latent-dimension selection by cross-validation
// ---------------------------------------------------------------------------

json run_cv_select_rep(const json& cfg, int rep) {
    const uint64_t base = cfg.at("base_seed").get<uint64_t>();
    const json& dg = cfg.at("datagen");

    LatentFactorSpec dspec;
    dspec.n = dg.at("n").get<Eigen::Index>();
    dspec.p = dg.at("p").get<int>();
    dspec.q1 = dg.at("q1").get<int>();
    dspec.noise_std = dg.at("noise_std").get<double>();
    dspec.hidden_width = dg.at("hidden_width").get<int>();
    dspec.seed = derive_seed(base, rep, 1);

    DataTable truth = gen_latent_factor_data(dspec);
    MissingnessSpec mspec = missingness_from(cfg.at("missingness"), derive_seed(base, rep, 2));
    DataTable masked = apply_mechanism(truth, mspec).drop_fully_missing();
    StandardizeResult sr = standardize(masked);

    CvConfig cv;
    cv.candidates = cfg.at("cv").at("candidates").get<std::vector<int>>();
    cv.folds = cfg.at("cv").at("folds").get<int>();
    cv.mask_fraction = cfg.at("cv").at("mask_fraction").get<double>();
    cv.impute_B = cfg.at("cv").at("impute_B").get<int>();
    cv.seed = derive_seed(base, rep, 3);
    cv.model = model_from(cfg.at("model"), static_cast<int>(masked.cols()));
    cv.train = train_from_json(cfg.at("train"), 0);  // per-fold seeds derived inside

    CvReport report = cross_validate_kappa1(sr.table, cv);

    json metrics;
    for (size_t c = 0; c < report.candidates.size(); ++c)
        metrics["cv_rmse_k" + std::to_string(report.candidates[c])] = report.mean_rmse[c];
    metrics["selected_kappa1"] = static_cast<double>(report.selected_kappa1);
    metrics["selected_kappa1_elbow"] = static_cast<double>(report.selected_kappa1_elbow);
    metrics["missing_rate"] = surviving_missing_rate(masked);
    return metrics;
}

// ---------------------------------------------------------------------------
// theory: executable checks on weight laws and the discrete-mechanism oracle
// ---------------------------------------------------------------------------

theory::WeightLaw law_from(const json& j) {
    std::string family = j.at("family").get<std::string>();
    if (family == "lognormal")
        return theory::WeightLaw::lognormal(j.at("mu0").get<double>(),
                                            j.at("sigma").get<double>());
    if (family == "two_point")
        return theory::WeightLaw::two_point(j.at("a").get<double>(), j.at("b").get<double>(),
                                            j.at("q").get<double>());
    if (family == "constant") return theory::WeightLaw::constant(j.at("c").get<double>());
    throw ConfigError("theory.law.family must be lognormal|two_point|constant");
}

json run_theory_rep(const json& cfg, int rep) {
    const json& th = cfg.at("theory");
    const uint64_t base = cfg.at("base_seed").get<uint64_t>();
    theory::WeightLaw law = law_from(th.at("law"));
    auto checks = th.at("checks").get<std::vector<std::string>>();
    auto has = [&](const std::string& name) {
        return std::find(checks.begin(), checks.end(), name) != checks.end();
    };

    json metrics;
    if (has("monotone")) {
        auto rp = theory::check_monotone_bounds(law, th.at("monotone_Ks").get<std::vector<int>>(),
                                                th.at("monotone_reps").get<int>(),
                                                derive_seed(base, rep, 1));
        metrics["monotone_pass"] = rp.pass ? 1.0 : 0.0;
        metrics["monotone_log_mean"] = rp.log_mean;
        for (size_t i = 0; i < rp.Ks.size(); ++i) {
            metrics["L_K" + std::to_string(rp.Ks[i])] = rp.L[i];
            metrics["L_K" + std::to_string(rp.Ks[i]) + "_se"] = rp.se[i];
        }
    }
    if (has("bias_variance")) {
        auto rp = theory::check_bias_variance(law, th.at("bias_variance_Ks").get<std::vector<int>>(),
                                              th.at("bias_variance_reps").get<long>(),
                                              derive_seed(base, rep, 2));
        metrics["bias_variance_pass"] = rp.pass ? 1.0 : 0.0;
        for (const auto& e : rp.entries) {
            metrics["k_bias_K" + std::to_string(e.K)] = e.k_bias;
            metrics["k_var_K" + std::to_string(e.K)] = e.k_var;
        }
        if (!rp.entries.empty()) {
            metrics["k_bias_predicted"] = rp.entries.front().k_bias_predicted;
            metrics["k_var_predicted"] = rp.entries.front().k_var_predicted;
        }
    }
    if (has("convergence")) {
        auto rp = theory::check_convergence_probability(
            law, th.at("convergence_K_grid").get<std::vector<int>>(),
            th.at("convergence_epsilon").get<double>(), th.at("convergence_trials").get<long>(),
            derive_seed(base, rep, 3));
        metrics["convergence_pass"] = rp.pass ? 1.0 : 0.0;
        metrics["convergence_final_prob"] = rp.final_prob;
        for (size_t i = 0; i < rp.K_grid.size(); ++i)
            metrics["exceed_prob_K" + std::to_string(rp.K_grid[i])] = rp.exceed_prob[i];
    }
    if (has("lemma1")) {
        SeededRng rng(derive_seed(base, rep, 4), 0x80);
        const int trials = th.at("lemma1_trials").get<int>();
        const int grid = th.at("lemma1_grid").get<int>();
        double worst_exact = 0.0, worst_grid = 0.0;
        for (int t = 0; t < trials; ++t) {
            int p = 1 + static_cast<int>(rng.next_below(3));
            int patterns = 1 << p;
            theory::DiscreteMechanism mech;
            mech.p = p;
            mech.table.resize(1, patterns);
            double total = 0.0;
            for (int r = 0; r < patterns; ++r) {
                mech.table(0, r) = -std::log(rng.uniform());  // Dirichlet(1,..,1)
                total += mech.table(0, r);
            }
            mech.table.row(0) /= total;
            auto res = theory::lemma1_oracle(mech, 0, grid);
            worst_exact = std::max(worst_exact, res.max_err_exact);
            worst_grid = std::max(worst_grid, res.max_err_grid);
        }
        metrics["lemma1_pass"] = worst_exact < 1e-12 ? 1.0 : 0.0;
        metrics["lemma1_worst_exact_err"] = worst_exact;
        metrics["lemma1_worst_grid_err"] = worst_grid;
        metrics["lemma1_grid_bound"] = 2.0 / grid;
    }
    return metrics;
}

// ---------------------------------------------------------------------------
// impute-csv and generate
// ---------------------------------------------------------------------------

json run_impute_csv(const json& cfg) {
    const json& io = cfg.at("io");
    const uint64_t base = cfg.at("base_seed").get<uint64_t>();
    std::string path = io.at("data_csv").get<std::string>();
    CsvLoadResult loaded = load_csv(path);

    const bool standardize_flag = cfg.at("eval").at("standardize").get<bool>();
    ColumnStats stats;
    DataTable work = loaded.table;
    if (standardize_flag) {
        StandardizeResult sr = standardize(loaded.table);
        work = sr.table;
        stats = sr.stats;
    }

    ModelConfig mc = model_from(cfg.at("model"), static_cast<int>(work.cols()));
    TrainConfig tc = train_from_json(cfg.at("train"), derive_seed(base, 0, 1));
    ImputeConfig ic = impute_from(cfg.at("impute"), derive_seed(base, 0, 2));

    TrainResult trained = train(work, mc, tc);
    if (trained.aborted) throw NumericError("training aborted: " + trained.diagnostic);

    if (!io.at("checkpoint").get<std::string>().empty())
        save_checkpoint(io.at("checkpoint").get<std::string>(), trained.params);

    ImputedTable imputed = impute(trained.params, work, ic);
    DataTable out_table = imputed.table;
    if (standardize_flag) out_table.values = destandardize_values(out_table.values, stats);
    out_table.column_names = loaded.table.column_names;

    if (!io.at("imputed_out").get<std::string>().empty())
        write_csv(io.at("imputed_out").get<std::string>(), out_table);
    if (!io.at("ess_out").get<std::string>().empty()) {
        json ess;
        ess["B"] = ic.B;
        ess["ess"] = std::vector<double>(imputed.ess.data(), imputed.ess.data() + imputed.ess.size());
        std::ofstream f(io.at("ess_out").get<std::string>());
        f << ess.dump(2);
    }

    json metrics;
    metrics["n"] = static_cast<double>(work.rows());
    metrics["p"] = static_cast<double>(work.cols());
    metrics["rows_dropped_fully_missing"] = static_cast<double>(loaded.dropped_fully_missing);
    metrics["missing_rate"] = work.missing_rate();
    metrics["epochs_run"] = static_cast<double>(trained.trace.epochs_run);
    metrics["final_neg_lhat"] = trained.trace.epoch_neg_lhat.back();
    metrics["mean_ess_fraction"] = imputed.ess.mean() / ic.B;
    return metrics;
}

json run_generate(const json& cfg) {
    const json& io = cfg.at("io");
    Checkpoint ckpt = load_checkpoint(io.at("checkpoint").get<std::string>());
    Eigen::Index n = io.at("generate_n").get<Eigen::Index>();
    DataTable table = generate(ckpt.params, n, cfg.at("base_seed").get<uint64_t>());
    if (!io.at("generated_out").get<std::string>().empty())
        write_csv(io.at("generated_out").get<std::string>(), table);
    json metrics;
    metrics["n"] = static_cast<double>(n);
    for (Eigen::Index j = 0; j < table.cols(); ++j)
        metrics["generated_mean_col" + std::to_string(j)] = table.values.col(j).mean();
    return metrics;
}

json aggregate_metrics(const json& replications) {
    json agg = json::object();
    if (replications.empty()) return agg;
    std::vector<std::string> keys;
    for (auto it = replications[0].at("metrics").begin(); it != replications[0].at("metrics").end();
         ++it)
        keys.push_back(it.key());
    for (const auto& key : keys) {
        std::vector<double> vals;
        for (const auto& rep : replications) {
            const json& m = rep.at("metrics");
            if (m.contains(key) && m[key].is_number()) vals.push_back(m[key].get<double>());
        }
        if (vals.empty()) continue;
        double mean = mean_of(vals);
        double var = 0.0;
        for (double v : vals) var += (v - mean) * (v - mean);
        double sd = vals.size() > 1 ? std::sqrt(var / (vals.size() - 1)) : 0.0;
        agg[key] = {{"mean", mean}, {"sd", sd}, {"n", vals.size()}};
    }
    return agg;
}

}  // namespace

uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b) {
    return splitmix(splitmix(base ^ splitmix(a)) ^ splitmix(b ^ 0x5851F42D4C957F2Dull));
}

int worker_count() {
    if (const char* env = std::getenv("IMIWAE_WORKERS")) {
        int v = std::atoi(env);
        if (v >= 1) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

std::vector<std::string> preset_names() {
    return {"table1-linear-latent",    "table1-nonlinear-latent",
            "table1-linear-threshold", "table1-nonlinear-threshold",
            "table1-selfcensor-ablation", "table1-mar-ablation",
            "selfcensoring-mechanism", "blockwise-highdim",
            "mixture-mean",            "cv-select",
            "theory-all"};
}

json preset_config(const std::string& name) {
    json j;
    auto desk_notes = [&](json& cfg) {
        cfg["notes"].push_back(
            "desk-scale preset: n, epochs, replications, hidden width, and importance-sample "
            "counts are reduced from the full-scale study (n=20000, 50 replications, hidden 128, "
            "10k epochs, B=10k)");
    };
    if (name == "table1-linear-latent" || name == "table1-nonlinear-latent" ||
        name == "table1-linear-threshold" || name == "table1-nonlinear-threshold" ||
        name == "table1-selfcensor-ablation" || name == "table1-mar-ablation" ||
        name == "selfcensoring-mechanism") {
        j["experiment"] = "simulate-impute";
        j["replications"] = 10;
        j["base_seed"] = 101;
        j["datagen"] = {{"n", 5000}, {"p", 3}, {"q1", 3}};
        j["missingness"] = {{"mechanism", "latent"}, {"linearity", "linear"}};
        j["model"] = {{"kappa1", 3}, {"kappa2", 1}, {"hidden", 64},
                      {"hidden_layers", 2}, {"miss_linearity", "linear"}, {"K", 20}};
        j["train"] = {{"max_epochs", 1000}};
        j["impute"] = {{"B", 2000}};
        j["notes"] = json::array();
        j["reference_values"] = {{"full_scale_rmse_mean", 0.7081},
                                 {"full_scale_rmse_sd", 0.1146},
                                 {"full_scale_mmd2_mean", 0.0086},
                                 {"full_scale_mmd2_sd", 0.0074}};
        desk_notes(j);
        if (name == "table1-nonlinear-latent") {
            j["missingness"]["linearity"] = "nonlinear";
            j["model"]["miss_linearity"] = "nonlinear";
            j["model"]["miss_hidden"] = 16;
            j["reference_values"] = {{"full_scale_rmse_mean", 0.7145},
                                     {"full_scale_rmse_sd", 0.1325}};
        } else if (name == "table1-linear-threshold") {
            j["missingness"]["mechanism"] = "threshold";
            j["reference_values"] = {{"full_scale_rmse_mean", 0.7386},
                                     {"full_scale_rmse_sd", 0.1687}};
        } else if (name == "table1-nonlinear-threshold") {
            j["missingness"]["mechanism"] = "threshold";
            j["missingness"]["linearity"] = "nonlinear";
            j["model"]["miss_linearity"] = "nonlinear";
            j["model"]["miss_hidden"] = 16;
            j["reference_values"] = {{"full_scale_rmse_mean", 0.7188},
                                     {"full_scale_rmse_sd", 0.1186}};
        } else if (name == "table1-selfcensor-ablation") {
            j["model"]["no_self_censoring"] = false;
            j["notes"].push_back(
                "ablation: the missingness decoder may read each variable's own value");
        } else if (name == "table1-mar-ablation") {
            j["impute"] = {{"B", 2000}, {"mode", "mar"}};
            j["notes"].push_back("ablation: ignorable-missingness imputation weights");
        } else if (name == "selfcensoring-mechanism") {
            j["datagen"] = {{"n", 5000}, {"p", 4}, {"q1", 3}};
            j["missingness"] = {{"mechanism", "self_censoring"}};
            j["model"] = {{"kappa1", 3},  {"kappa2", 1},
                          {"hidden", 64}, {"hidden_layers", 2},
                          {"miss_linearity", "nonlinear"}, {"miss_hidden", 16}, {"K", 20}};
            j["notes"].push_back(
                "robustness setting: the generating mechanism censors on each variable's own "
                "value, which the model structurally excludes");
        }
        return j;
    }
    if (name == "blockwise-highdim") {
        j["experiment"] = "simulate-impute";
        j["replications"] = 3;
        j["base_seed"] = 404;
        j["datagen"] = {{"n", 2000}, {"p", 30}, {"q1", 10}};
        j["missingness"] = {{"mechanism", "blockwise"}, {"linearity", "linear"},
                            {"group_size", 5},          {"target_lo", 0.45},
                            {"target_hi", 0.55}};
        j["model"] = {{"kappa1", 10}, {"kappa2", 1}, {"hidden", 64},
                      {"hidden_layers", 2}, {"miss_linearity", "linear"}, {"K", 20}};
        j["train"] = {{"max_epochs", 300}};
        j["impute"] = {{"B", 500}};
        j["eval"] = {{"mmd_max_n", 1000}};
        j["notes"] = json::array();
        desk_notes(j);
        return j;
    }
    if (name == "mixture-mean") {
        j["experiment"] = "mixture-mean";
        j["replications"] = 10;
        j["base_seed"] = 202;
        j["datagen"] = {{"kind", "gaussian_mixture"}, {"n", 20000}};
        j["model"] = {{"kappa1", 3}, {"kappa2", 1}, {"hidden", 64}, {"hidden_layers", 1},
                      {"miss_linearity", "linear"}, {"K", 20}};
        j["train"] = {{"max_epochs", 2000}};
        j["impute"] = {{"B", 2000}};
        j["eval"] = {{"mean_column", 2}, {"bootstrap_reps", 1000}};
        j["notes"] = json::array();
        j["notes"].push_back(
            "mixture networks use one hidden layer; pattern probabilities renormalized from the "
            "published values (sum 1.001) to sum to one");
        desk_notes(j);
        return j;
    }
    if (name == "cv-select") {
        j["experiment"] = "cv-select";
        j["replications"] = 10;
        j["base_seed"] = 303;
        j["datagen"] = {{"n", 2000}, {"p", 6}, {"q1", 3}};
        j["missingness"] = {{"mechanism", "threshold"}, {"linearity", "linear"}};
        j["model"] = {{"kappa1", 3}, {"kappa2", 1}, {"hidden", 32}, {"hidden_layers", 1},
                      {"miss_linearity", "linear"}, {"K", 20}};
        j["train"] = {{"max_epochs", 200}, {"convergence_window", 0}};
        j["cv"] = {{"candidates", json::array({1, 3})}, {"folds", 5},
                   {"mask_fraction", 0.2},              {"impute_B", 500}};
        j["notes"] = json::array();
        desk_notes(j);
        return j;
    }
    if (name == "theory-all") {
        j["experiment"] = "theory";
        j["replications"] = 1;
        j["base_seed"] = 7;
        j["notes"] = json::array();
        return j;
    }
    throw ConfigError("unknown preset '" + name + "'; available: " + [] {
        std::string s;
        for (const auto& n : preset_names()) s += (s.empty() ? "" : ", ") + n;
        return s;
    }());
}

json resolve_config(const json& config) {
    json user = config;
    json resolved = default_config();
    if (user.contains("preset")) {
        std::string preset = user.at("preset").get<std::string>();
        json base = preset_config(preset);
        user.erase("preset");
        deep_merge(resolved, base);
        resolved["preset"] = preset;
    }
    deep_merge(resolved, user);

    std::vector<std::string> errors;
    if (!resolved.contains("experiment") || !resolved["experiment"].is_string() ||
        resolved["experiment"].get<std::string>().empty()) {
        errors.push_back("experiment is required");
    } else {
        std::string kind = resolved["experiment"].get<std::string>();
        if (std::find(kKinds.begin(), kKinds.end(), kind) == kKinds.end()) {
            std::string opts;
            for (const auto& k : kKinds) opts += (opts.empty() ? "" : "|") + k;
            errors.push_back("experiment = '" + kind + "' not one of {" + opts + "}");
        }
    }
    check_number(resolved, "", "replications", 1, 1e6, errors);
    check_number(resolved, "", "base_seed", 0, 1.8e19, errors);
    check_enum(resolved["datagen"], "datagen", "kind", {"latent_factor", "gaussian_mixture"},
               errors);
    check_number(resolved["datagen"], "datagen", "n", 1, 1e9, errors);
    check_number(resolved["datagen"], "datagen", "p", 1, 100000, errors);
    check_number(resolved["datagen"], "datagen", "q1", 1, 100000, errors);
    check_number(resolved["datagen"], "datagen", "noise_std", 0, 1e6, errors);
    check_enum(resolved["missingness"], "missingness", "mechanism",
               {"latent", "threshold", "blockwise", "self_censoring"}, errors);
    check_enum(resolved["missingness"], "missingness", "linearity", {"linear", "nonlinear"},
               errors);
    check_number(resolved["missingness"], "missingness", "target_lo", 0, 1, errors);
    check_number(resolved["missingness"], "missingness", "target_hi", 0, 1, errors);
    check_number(resolved["model"], "model", "kappa1", 1, 100000, errors);
    check_number(resolved["model"], "model", "kappa2", 0, 100000, errors);
    check_number(resolved["model"], "model", "K", 1, 1e6, errors);
    check_number(resolved["model"], "model", "gamma_init", 1e-4, 1e6, errors);
    check_enum(resolved["model"], "model", "miss_linearity", {"linear", "nonlinear"}, errors);
    check_number(resolved["train"], "train", "batch_size", 1, 1e6, errors);
    check_number(resolved["train"], "train", "learning_rate", 1e-12, 1e3, errors);
    check_number(resolved["train"], "train", "max_epochs", 1, 1e7, errors);
    check_enum(resolved["train"], "train", "optimizer", {"adam", "sgd"}, errors);
    check_number(resolved["impute"], "impute", "B", 1, 1e9, errors);
    check_enum(resolved["impute"], "impute", "mode", {"mnar", "mar"}, errors);
    check_number(resolved["eval"], "eval", "bootstrap_reps", 100, 1e7, errors);
    check_number(resolved["cv"], "cv", "folds", 2, 1000, errors);
    check_number(resolved["cv"], "cv", "mask_fraction", 1e-9, 0.5, errors);

    if (resolved["missingness"]["target_lo"].is_number() &&
        resolved["missingness"]["target_hi"].is_number() &&
        resolved["missingness"]["target_lo"].get<double>() >=
            resolved["missingness"]["target_hi"].get<double>())
        errors.push_back("missingness.target_lo must be < missingness.target_hi");

    std::string kind = resolved.value("experiment", std::string());
    if (kind == "impute-csv" && resolved["io"]["data_csv"].get<std::string>().empty())
        errors.push_back("impute-csv requires io.data_csv");
    if (kind == "generate" && resolved["io"]["checkpoint"].get<std::string>().empty())
        errors.push_back("generate requires io.checkpoint");

    if (!errors.empty()) {
        std::string msg = "invalid config (" + std::to_string(errors.size()) + " problem(s)):";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw ConfigError(msg);
    }
    return resolved;
}

RunReport run_experiment(const json& config) {
    json cfg = resolve_config(config);
    const std::string kind = cfg.at("experiment").get<std::string>();
    const int reps = (kind == "impute-csv" || kind == "generate")
                         ? 1
                         : cfg.at("replications").get<int>();

    auto t0 = std::chrono::steady_clock::now();
    std::vector<json> rep_results(reps);

    auto run_one = [&](int r) -> json {
        if (kind == "simulate-impute") return run_simulate_impute_rep(cfg, r);
        if (kind == "mixture-mean") return run_mixture_mean_rep(cfg, r);
        if (kind == "cv-select") return run_cv_select_rep(cfg, r);
        if (kind == "theory") return run_theory_rep(cfg, r);
        if (kind == "impute-csv") return run_impute_csv(cfg);
        if (kind == "generate") return run_generate(cfg);
        throw ConfigError("unknown experiment kind '" + kind + "'");
    };

    const int workers = std::min(worker_count(), reps);
    if (workers <= 1) {
        for (int r = 0; r < reps; ++r) rep_results[r] = run_one(r);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (int r = next.fetch_add(1); r < reps; r = next.fetch_add(1))
                        rep_results[r] = run_one(r);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
    auto t1 = std::chrono::steady_clock::now();

    json replications = json::array();
    for (int r = 0; r < reps; ++r) {
        replications.push_back({{"replication", r},
                                {"seed", derive_seed(cfg.at("base_seed").get<uint64_t>(), r, 0)},
                                {"metrics", rep_results[r]}});
    }

    RunReport report;
    report.json = {{"format", "imiwae-report"},
                   {"version", kVersion},
                   {"experiment", kind},
                   {"resolved_config", cfg},
                   {"replications", replications},
                   {"aggregates", aggregate_metrics(replications)},
                   {"wall_seconds", std::chrono::duration<double>(t1 - t0).count()}};
    return report;
}

std::string write_report(const RunReport& report, const std::string& output_dir) {
    std::filesystem::create_directories(output_dir);
    std::string path = (std::filesystem::path(output_dir) / "report.json").string();
    std::ofstream f(path);
    if (!f) throw ParseError("cannot write report to " + path);
    f << report.json.dump(2) << "\n";
    return path;
}

json aggregate_reports(const std::vector<json>& reports) {
    if (reports.empty()) throw ConfigError("aggregate: no reports given");
    std::string kind = reports[0].at("experiment").get<std::string>();
    json pooled = json::array();
    for (const auto& r : reports) {
        if (r.at("experiment").get<std::string>() != kind)
            throw ConfigError("aggregate: mixed experiment kinds ('" + kind + "' vs '" +
                              r.at("experiment").get<std::string>() + "')");
        for (const auto& rep : r.at("replications")) pooled.push_back(rep);
    }
    json out;
    out["experiment"] = kind;
    out["n_replications"] = pooled.size();
    out["metrics"] = aggregate_metrics(pooled);
    return out;
}

std::string aggregate_to_csv(const json& aggregates) {
    std::ostringstream out;
    out.precision(10);
    out << "metric,mean,sd,n\n";
    for (auto it = aggregates.at("metrics").begin(); it != aggregates.at("metrics").end(); ++it)
        out << it.key() << ',' << (*it)["mean"].get<double>() << ',' << (*it)["sd"].get<double>()
            << ',' << (*it)["n"].get<int>() << '\n';
    return out.str();
}

}  // namespace imiwae
