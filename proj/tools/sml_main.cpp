// Command-line front end: train/evaluate the uncertainty methods, sweep beta,
// run the analytical landscape study, and aggregate reports.
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sml/experiment.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::vector<std::string> methods;
    std::vector<std::string> splits;
    bool no_save_models = false;
};

void add_common_flags(CLI::App* cmd, sml::ExperimentConfig& cfg, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "config file (flat key = value)");
    cmd->add_option("--dataset", cfg.dataset, "dataset name ('toy' or a name under data/)");
    cmd->add_option("--dataset-path", cfg.dataset_path, "CSV path (default data/<name>.csv)");
    cmd->add_option("--schema", cfg.schema_path, "JSON schema manifest for the CSV");
    cmd->add_option("--out", cfg.out_dir, "output directory");
    cmd->add_option("--method", flags.methods, "methods: MC, MC-LL, SML, PU, DE, PU-DE");
    cmd->add_option("--split", flags.splits,
                    "split kinds: iid-train, iid-test, pca-interp, pca-extrap, label-interp, label-extrap");
    cmd->add_option("--folds", cfg.folds, "cross-validation folds (0 = per size class)");
    cmd->add_option("--epochs", cfg.epochs, "training epochs (0 = per size class)");
    cmd->add_option("--batch-size", cfg.batch_size, "mini-batch size (0 = per size class)");
    cmd->add_option("--learning-rate", cfg.learning_rate, "Adam learning rate (0 = per dataset rule)");
    cmd->add_option("--beta", cfg.beta, "spread-loss weight");
    cmd->add_option("--keep-prob", cfg.keep_prob, "dropout keep probability");
    cmd->add_option("--samples", cfg.sample_count, "sub-network samples T at prediction time");
    cmd->add_option("--bins", cfg.ece_bins, "ECE bin count");
    cmd->add_option("--held-chunk", cfg.held_interp_chunk, "held-out chunk for interpolation splits");
    cmd->add_option("--held-extrap-chunk", cfg.held_extrap_chunk, "held-out chunk for extrapolation splits");
    cmd->add_option("--toy-n", cfg.toy_n, "points for the synthetic toy dataset");
    cmd->add_option("--jobs", cfg.jobs, "parallel runs (0 = CPU count)");
    cmd->add_option("--seed", cfg.seed, "root seed; all run streams derive from it");
    cmd->add_flag("--no-save-models", flags.no_save_models, "skip model dumps");
}

// Config file first, then explicit flags on top.
sml::ExperimentConfig resolve_config(const sml::ExperimentConfig& flag_values, const CommonFlags& flags,
                                     const CLI::App* cmd) {
    sml::ExperimentConfig cfg;
    if (!flags.config_path.empty()) sml::apply_config_file(cfg, flags.config_path);

    auto overridden = [cmd](const std::string& name) { return cmd->count(name) > 0; };
    if (overridden("--dataset")) cfg.dataset = flag_values.dataset;
    if (overridden("--dataset-path")) cfg.dataset_path = flag_values.dataset_path;
    if (overridden("--schema")) cfg.schema_path = flag_values.schema_path;
    if (overridden("--out")) cfg.out_dir = flag_values.out_dir;
    if (overridden("--folds")) cfg.folds = flag_values.folds;
    if (overridden("--epochs")) cfg.epochs = flag_values.epochs;
    if (overridden("--batch-size")) cfg.batch_size = flag_values.batch_size;
    if (overridden("--learning-rate")) cfg.learning_rate = flag_values.learning_rate;
    if (overridden("--beta")) cfg.beta = flag_values.beta;
    if (overridden("--keep-prob")) cfg.keep_prob = flag_values.keep_prob;
    if (overridden("--samples")) cfg.sample_count = flag_values.sample_count;
    if (overridden("--bins")) cfg.ece_bins = flag_values.ece_bins;
    if (overridden("--held-chunk")) cfg.held_interp_chunk = flag_values.held_interp_chunk;
    if (overridden("--held-extrap-chunk")) cfg.held_extrap_chunk = flag_values.held_extrap_chunk;
    if (overridden("--toy-n")) cfg.toy_n = flag_values.toy_n;
    if (overridden("--jobs")) cfg.jobs = flag_values.jobs;
    if (overridden("--seed")) cfg.seed = flag_values.seed;
    if (flags.no_save_models) cfg.save_models = false;

    if (!flags.methods.empty()) {
        cfg.methods.clear();
        for (const auto& m : flags.methods) cfg.methods.push_back(sml::parse_method(m));
    }
    if (!flags.splits.empty()) {
        cfg.splits.clear();
        for (const auto& s : flags.splits) cfg.splits.push_back(sml::parse_split_kind(s));
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Second-moment-loss uncertainty workbench"};
    app.require_subcommand(1);

    sml::ExperimentConfig run_cfg;
    CommonFlags run_flags;
    CLI::App* run = app.add_subcommand("run", "train and evaluate methods over splits and folds");
    add_common_flags(run, run_cfg, run_flags);

    sml::ExperimentConfig sweep_cfg;
    CommonFlags sweep_flags;
    std::vector<double> sweep_betas{0.1, 0.25, 0.5, 0.75, 0.9};
    CLI::App* sweep = app.add_subcommand("sweep-beta", "run the SML beta sweep");
    add_common_flags(sweep, sweep_cfg, sweep_flags);
    sweep->add_option("--betas", sweep_betas, "beta values to sweep");

    sml::LandscapeSpec land;
    std::string land_out = "out";
    CLI::App* landscape = app.add_subcommand("landscape", "closed-form loss landscape and argmin curve");
    landscape->add_option("--mu-min", land.mu_min);
    landscape->add_option("--mu-max", land.mu_max);
    landscape->add_option("--mu-steps", land.mu_steps);
    landscape->add_option("--sigma-min", land.sigma_min);
    landscape->add_option("--sigma-max", land.sigma_max);
    landscape->add_option("--sigma-steps", land.sigma_steps);
    landscape->add_option("--mc-n", land.mc_n, "Monte-Carlo samples per grid point (0 = closed form only)");
    landscape->add_option("--seed", land.seed);
    landscape->add_option("--out", land_out);

    std::vector<std::string> report_dirs;
    std::string report_out = "out/report";
    CLI::App* report = app.add_subcommand("report", "merge run directories into summary tables");
    report->add_option("dirs", report_dirs, "run directories containing reports.csv")->required();
    report->add_option("--out", report_out);

    sml::ExperimentConfig exp_cfg;
    CommonFlags exp_flags;
    CLI::App* exp = app.add_subcommand("export-components", "export loss components and sigma decomposition");
    add_common_flags(exp, exp_cfg, exp_flags);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return sml::cmd_run(resolve_config(run_cfg, run_flags, run));
        if (sweep->parsed()) return sml::cmd_sweep_beta(resolve_config(sweep_cfg, sweep_flags, sweep), sweep_betas);
        if (landscape->parsed()) return sml::cmd_landscape(land, land_out);
        if (report->parsed()) return sml::cmd_report(report_dirs, report_out);
        if (exp->parsed()) return sml::cmd_export_components(resolve_config(exp_cfg, exp_flags, exp));
    } catch (const sml::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
