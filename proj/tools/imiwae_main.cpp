#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "imiwae/checkpoint.hpp"
#include "imiwae/cross_validation.hpp"
#include "imiwae/errors.hpp"
#include "imiwae/csv.hpp"
#include "imiwae/data_table.hpp"
#include "imiwae/experiment.hpp"
#include "imiwae/imputer.hpp"
#include "imiwae/trainer.hpp"
#include "imiwae/version.hpp"

namespace {

using nlohmann::json;

json load_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw imiwae::ParseError("cannot open config: " + path);
    return json::parse(f);
}

int cmd_run(const std::string& config_path, const std::string& preset,
            const std::string& out_dir) {
    json config;
    if (!config_path.empty()) config = load_json(config_path);
    if (!preset.empty()) config["preset"] = preset;
    if (!out_dir.empty()) config["output_dir"] = out_dir;

    imiwae::RunReport report = imiwae::run_experiment(config);
    std::string dir = report.json.at("resolved_config").at("output_dir").get<std::string>();
    std::string path = imiwae::write_report(report, dir);
    std::cout << "experiment: " << report.experiment() << "\n";
    std::cout << "report: " << path << "\n";
    for (auto it = report.json.at("aggregates").begin(); it != report.json.at("aggregates").end();
         ++it)
        std::cout << "  " << it.key() << ": mean " << (*it)["mean"].get<double>() << " sd "
                  << (*it)["sd"].get<double>() << "\n";
    return 0;
}

int cmd_aggregate(const std::vector<std::string>& paths, const std::string& out_csv) {
    std::vector<json> reports;
    for (const auto& p : paths) reports.push_back(load_json(p));
    json agg = imiwae::aggregate_reports(reports);
    std::string csv = imiwae::aggregate_to_csv(agg);
    if (out_csv.empty()) {
        std::cout << csv;
    } else {
        std::ofstream f(out_csv);
        f << csv;
        std::cout << "wrote " << out_csv << "\n";
    }
    return 0;
}

int cmd_impute(const std::string& model_path, const std::string& data_path,
               const std::string& out_path, const std::string& mode, int B,
               const std::string& ess_out) {
    imiwae::Checkpoint ckpt = imiwae::load_checkpoint(model_path);
    imiwae::CsvLoadResult loaded = imiwae::load_csv(data_path);
    if (loaded.dropped_fully_missing > 0)
        std::cerr << "dropped " << loaded.dropped_fully_missing << " fully missing row(s)\n";

    imiwae::ImputeConfig cfg;
    cfg.B = B;
    cfg.mode = imiwae::impute_mode_from_string(mode);
    imiwae::ImputedTable result = imiwae::impute(ckpt.params, loaded.table, cfg);
    imiwae::write_csv(out_path, result.table);
    std::cout << "imputed " << loaded.table.rows() << " rows -> " << out_path << "\n";
    if (!ess_out.empty()) {
        json ess;
        ess["B"] = cfg.B;
        ess["ess"] = std::vector<double>(result.ess.data(), result.ess.data() + result.ess.size());
        std::ofstream f(ess_out);
        f << ess.dump(2);
    }
    return 0;
}

int cmd_verify_theory(const std::string& check, const std::string& out_dir) {
    json config;
    config["preset"] = "theory-all";
    if (!check.empty()) config["theory"]["checks"] = json::array({check});
    if (!out_dir.empty()) config["output_dir"] = out_dir;
    imiwae::RunReport report = imiwae::run_experiment(config);
    const json& metrics = report.json.at("replications")[0].at("metrics");
    bool all_pass = true;
    for (auto it = metrics.begin(); it != metrics.end(); ++it) {
        if (it.key().size() > 5 && it.key().substr(it.key().size() - 5) == "_pass") {
            bool pass = it->get<double>() == 1.0;
            all_pass = all_pass && pass;
            std::cout << (pass ? "[PASS] " : "[FAIL] ") << it.key().substr(0, it.key().size() - 5)
                      << "\n";
        }
    }
    if (!out_dir.empty())
        std::cout << "report: " << imiwae::write_report(report, out_dir) << "\n";
    else
        std::cout << report.json.at("replications")[0].at("metrics").dump(2) << "\n";
    return all_pass ? 0 : 1;
}

int cmd_cv(const std::string& data_path, const std::vector<int>& kappa1, int folds,
           double mask_fraction, int epochs) {
    imiwae::CsvLoadResult loaded = imiwae::load_csv(data_path);
    imiwae::StandardizeResult sr = imiwae::standardize(loaded.table);

    imiwae::CvConfig cfg;
    cfg.candidates = kappa1;
    cfg.folds = folds;
    cfg.mask_fraction = mask_fraction;
    cfg.model.p = static_cast<int>(loaded.table.cols());
    cfg.model.kappa2 = 1;
    cfg.model.hidden = 64;
    cfg.model.hidden_layers = 2;
    cfg.train.max_epochs = epochs;
    imiwae::CvReport report = imiwae::cross_validate_kappa1(sr.table, cfg);
    for (size_t c = 0; c < report.candidates.size(); ++c)
        std::cout << "kappa1 " << report.candidates[c] << ": mean CV-RMSE "
                  << report.mean_rmse[c] << "\n";
    std::cout << "selected kappa1: " << report.selected_kappa1
              << " (elbow: " << report.selected_kappa1_elbow << ")\n";
    return 0;
}

int cmd_presets() {
    for (const auto& name : imiwae::preset_names()) std::cout << name << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"IM-IWAE experiment harness"};
    app.set_version_flag("--version", imiwae::kVersion);
    app.require_subcommand(1);

    std::string config_path, preset, out_dir;
    auto* run = app.add_subcommand("run", "run an experiment from a JSON config or preset");
    run->add_option("config", config_path, "config JSON path");
    run->add_option("--preset", preset, "named preset");
    run->add_option("--out", out_dir, "output directory override");

    std::vector<std::string> report_paths;
    std::string agg_out;
    auto* agg = app.add_subcommand("aggregate", "pool replication metrics across reports");
    agg->add_option("reports", report_paths, "report.json paths")->required();
    agg->add_option("--out", agg_out, "output CSV path (stdout when omitted)");

    std::string model_path, data_path, imputed_out, mode = "mnar", ess_out;
    int B = 10000;
    auto* imp = app.add_subcommand("impute", "impute a CSV with a trained checkpoint");
    imp->add_option("--model", model_path, "checkpoint path")->required();
    imp->add_option("--data", data_path, "input CSV")->required();
    imp->add_option("--out", imputed_out, "completed CSV")->required();
    imp->add_option("--mode", mode, "mnar|mar");
    imp->add_option("--B", B, "importance samples per row");
    imp->add_option("--ess-out", ess_out, "ESS diagnostics JSON");

    std::string check, theory_out;
    auto* th = app.add_subcommand("verify-theory", "run the theory checks");
    th->add_option("--check", check, "monotone|bias_variance|convergence|lemma1");
    th->add_option("--out", theory_out, "report directory");

    std::string cv_data;
    std::vector<int> cv_kappa1;
    int cv_folds = 5, cv_epochs = 300;
    double cv_mask_fraction = 0.2;
    auto* cv = app.add_subcommand("cv", "cross-validate the data latent dimension");
    cv->add_option("--data", cv_data, "input CSV")->required();
    cv->add_option("--kappa1", cv_kappa1, "candidate dimensions")->required();
    cv->add_option("--folds", cv_folds, "fold count");
    cv->add_option("--mask-fraction", cv_mask_fraction, "validation MCAR mask fraction");
    cv->add_option("--epochs", cv_epochs, "training epochs per fold");

    app.add_subcommand("presets", "list available presets");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("run")) return cmd_run(config_path, preset, out_dir);
        if (app.got_subcommand("aggregate")) return cmd_aggregate(report_paths, agg_out);
        if (app.got_subcommand("impute"))
            return cmd_impute(model_path, data_path, imputed_out, mode, B, ess_out);
        if (app.got_subcommand("verify-theory")) return cmd_verify_theory(check, theory_out);
        if (app.got_subcommand("cv"))
            return cmd_cv(cv_data, cv_kappa1, cv_folds, cv_mask_fraction, cv_epochs);
        if (app.got_subcommand("presets")) return cmd_presets();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
