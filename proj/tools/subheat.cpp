#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

#include "subheat/config.hpp"
#include "subheat/pipeline.hpp"

extern char** environ;

int main(int argc, char** argv) {
    using namespace subheat;
    CLI::App app{"Subordinated heat-kernel verification suite"};
    std::string command, config_path, output, cache;
    unsigned jobs = 1;
    std::uint64_t seed = 0;
    bool quiet = false;
    std::string commands;
    for (const auto& c : command_names()) commands += (commands.empty() ? "" : ", ") + c;
    app.add_option("command", command, "one of: " + commands)->required()->check(CLI::IsMember(command_names()));
    app.add_option("--config", config_path, "JSON configuration (defaults when omitted)")->envname("SUBHEAT_CONFIG");
    auto* out_opt = app.add_option("--output", output, "output directory")->envname("SUBHEAT_OUTPUT");
    auto* cache_opt = app.add_option("--cache", cache, "eigendecomposition cache directory")->envname("SUBHEAT_CACHE");
    app.add_option("--jobs", jobs, "concurrent tasks")->envname("SUBHEAT_JOBS")->check(CLI::PositiveNumber);
    auto* seed_opt = app.add_option("--seed", seed, "seed for generated test inputs")->envname("SUBHEAT_SEED");
    app.add_flag("--quiet", quiet, "suppress progress lines");
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    RunConfig cfg;
    try {
        cfg = load_config(config_path, subheat_environment(environ));
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    if (*seed_opt) {
        cfg.seed = seed;
        cfg.canonical["seed"] = seed;
    }
    RunOptions opt;
    opt.output = *out_opt ? output : cfg.output_dir;
    opt.cache = *cache_opt ? cache : cfg.cache_dir;
    opt.jobs = jobs;

    Logger log(&std::cerr, quiet);
    try {
        RunResult res = run_command(command, cfg, opt, log);
        for (const auto& rec : res.records) {
            if (!rec.error.empty()) std::cout << "ERROR " << rec.name << ": " << rec.error << "\n";
            for (const auto& r : rec.output.reports) std::cout << (r.pass ? "PASS " : "FAIL ") << r.bound.name << "\n";
        }
        for (const auto& name : res.failures) {
            const BoundReport* r = res.find(name);
            std::cerr << "FAIL: " << name;
            if (r) std::cerr << " (empirical_sup " << CsvTable::cell(r->empirical_sup) << ")";
            std::cerr << "\n";
        }
        return res.exit_code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
