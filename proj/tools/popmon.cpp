// Command-line driver for the monitoring experiment pipeline.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "popmon/harness.hpp"

namespace {

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "run";
};

void add_common(CLI::App* cmd, CommonOptions& o, bool needs_config) {
    auto* c = cmd->add_option("--config", o.config, "experiment config JSON");
    if (needs_config) c->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "override the master seed");
    cmd->add_option("--out", o.out, "run directory")->capture_default_str();
}

popmon::ExperimentConfig load_config(const CommonOptions& o) {
    popmon::ExperimentConfig c;
    if (!o.config.empty()) c = popmon::ExperimentConfig::load(o.config);
    if (o.seed) c.apply_seed(*o.seed);
    c.validate();
    return c;
}

// Prefer the config saved by gen-data when none is given.
popmon::ExperimentConfig run_config(const CommonOptions& o) {
    if (o.config.empty()) {
        const auto saved = std::filesystem::path(o.out) / "config.json";
        if (std::filesystem::exists(saved)) {
            CommonOptions with_saved = o;
            with_saved.config = saved.string();
            return load_config(with_saved);
        }
    }
    return load_config(o);
}

void print_summary(const nlohmann::json& report) {
    if (report.contains("kl")) {
        for (const auto& [model, v] : report["kl"].items()) {
            std::printf("kl %-4s mean %.4f over %zu terms\n", model.c_str(), v["mean"].get<double>(),
                        v["terms"].get<std::size_t>());
        }
    }
    for (const auto& [mode, v] : report["monitoring"].items()) {
        std::printf("%-4s precision %.3f recall %.3f f1 %.3f emissions %zu mean %.2f ms\n", mode.c_str(),
                    v["precision"].get<double>(), v["recall"].get<double>(), v["f1"].get<double>(),
                    v["emissions"].get<std::size_t>(), v["mean_response_ms"].get<double>());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Populated-partition monitoring experiments"};
    app.require_subcommand(1);

    CommonOptions gen, ext, train, mon, eval, run;
    std::optional<double> snapshot_time;
    std::string snapshot_out;

    auto* gen_cmd = app.add_subcommand("gen-data", "generate building, trajectories and ground truth");
    add_common(gen_cmd, gen, true);
    auto* ext_cmd = app.add_subcommand("extract", "extract the population series (or one snapshot with --t)");
    add_common(ext_cmd, ext, true);
    ext_cmd->add_option("--t", snapshot_time, "single snapshot time in seconds");
    ext_cmd->add_option("--output", snapshot_out, "snapshot CSV path (default <out>/snapshot_<t>.csv)");
    auto* train_cmd = app.add_subcommand("train", "train the selected estimators");
    add_common(train_cmd, train, true);
    auto* mon_cmd = app.add_subcommand("monitor", "run the query instances");
    add_common(mon_cmd, mon, true);
    auto* eval_cmd = app.add_subcommand("evaluate", "recompute report.json from the logs");
    add_common(eval_cmd, eval, false);
    auto* run_cmd = app.add_subcommand("run", "all stages in order");
    add_common(run_cmd, run, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (*gen_cmd) {
            popmon::stage_generate(run_config(gen), gen.out);
        } else if (*ext_cmd) {
            const auto c = run_config(ext);
            if (snapshot_time) {
                std::string path = snapshot_out;
                if (path.empty()) {
                    char name[64];
                    std::snprintf(name, sizeof name, "snapshot_%g.csv", *snapshot_time);
                    path = (std::filesystem::path(ext.out) / name).string();
                }
                popmon::extract_snapshot(c, ext.out, *snapshot_time, path);
                std::printf("%s\n", path.c_str());
            } else {
                popmon::stage_extract(c, ext.out);
            }
        } else if (*train_cmd) {
            popmon::stage_train(run_config(train), train.out);
        } else if (*mon_cmd) {
            popmon::stage_monitor(run_config(mon), mon.out);
        } else if (*eval_cmd) {
            print_summary(popmon::stage_evaluate(eval.out));
        } else if (*run_cmd) {
            print_summary(popmon::run_experiment(load_config(run), run.out));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
