#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "dpn/experiment.hpp"

namespace {

std::string flag_name(const std::string& key) {
    std::string s = "--" + key;
    for (char& ch : s)
        if (ch == '_') ch = '-';
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Causal DeepONet and DeepPropNet experiments for the 1-D wave equation"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string preset, config_file;
    std::vector<std::string> assignments;
    app.add_option("--preset", preset,
                   "starting configuration: full-case1, full-case2, full-propnet, desk-case1, desk-case2, desk-propnet");
    app.add_option("--config", config_file, "key=value configuration file applied after the preset");
    app.add_option("--set", assignments, "extra key=value overrides, applied last")->take_all();

    // One flag per configuration key; values are applied after the preset and file.
    std::map<std::string, std::string> values;
    std::map<std::string, bool> switches;
    for (const auto& f : dpn::config_fields()) {
        if (f.flag) {
            app.add_flag(flag_name(f.key), switches[f.key], f.help);
        } else {
            app.add_option(flag_name(f.key), values[f.key], f.help);
        }
    }

    auto* gen = app.add_subcommand("gen-data", "generate training and test datasets");
    auto* train = app.add_subcommand("train", "train a model and write checkpoint and reports");
    auto* eval = app.add_subcommand("eval", "per-case relative L2 of a checkpoint on a dataset");
    auto* roll = app.add_subcommand("rollout", "block-by-block rollout CSVs for selected cases");
    auto* compare = app.add_subcommand("compare-init", "exact-init vs predicted-init errors over a dataset");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? dpn::kExitOk : dpn::kExitConfig;
    }

    return dpn::run_with_exit_code(
        [&] {
            dpn::ExperimentConfig cfg;
            if (!preset.empty()) dpn::apply_preset(cfg, preset);
            if (!config_file.empty()) dpn::apply_config_file(cfg, config_file);
            for (const auto& f : dpn::config_fields()) {
                const std::string name = flag_name(f.key);
                if (app.count(name) == 0) continue;
                f.set(cfg, f.flag ? (switches[f.key] ? "true" : "false") : values[f.key]);
            }
            for (const auto& a : assignments) {
                const auto eq = a.find('=');
                if (eq == std::string::npos) throw dpn::ConfigError("--set expects key=value, got '" + a + "'");
                dpn::set_config_value(cfg, a.substr(0, eq), a.substr(eq + 1));
            }
            if (gen->parsed()) dpn::cmd_gen_data(cfg, std::cout);
            if (train->parsed()) dpn::cmd_train(cfg, std::cout);
            if (eval->parsed()) dpn::cmd_eval(cfg, std::cout);
            if (roll->parsed()) dpn::cmd_rollout(cfg, std::cout);
            if (compare->parsed()) dpn::cmd_compare_init(cfg, std::cout);
        },
        std::cerr);
}
