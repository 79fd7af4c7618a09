#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "ncflow/experiments.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Moebius-weighted averages of matrix, CAR and free-group flows"};
    std::string experiment, config_path, out;
    std::optional<std::uint64_t> seed, n_max;
    std::optional<unsigned> workers;

    app.add_option("--experiment", experiment, "sieve | mertens | decay | matrix-flow | prop31 | quantize | "
                                               "car-demo | counterexample | pure-point | free-clt | bsz-check");
    app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "64-bit seed");
    app.add_option("--n-max", n_max, "sieve horizon");
    app.add_option("--out", out, "output directory");
    app.add_option("--workers", workers, "worker threads")->check(CLI::Range(1u, 256u));
    app.add_flag_callback("--version", [] {
        std::cout << ncflow::kVersion << '\n';
        std::exit(0);
    }, "print the library version");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        ncflow::json j = ncflow::json::object();
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            try {
                j = ncflow::json::parse(in);
            } catch (const ncflow::json::parse_error& e) {
                throw ncflow::UsageError(std::string("cannot parse ") + config_path + ": " + e.what());
            }
        }
        if (!experiment.empty()) j["experiment"] = experiment;
        if (seed) j["seed"] = *seed;
        if (n_max) j["n_max"] = *n_max;
        if (!out.empty()) j["out"] = out;
        if (workers) j["workers"] = *workers;
        if (!j.contains("experiment")) throw ncflow::UsageError("--experiment or a config with 'experiment' is required");

        const auto config = ncflow::config_from_json(j);
        const int rc = ncflow::run(config);
        std::cout << "wrote " << config.out << "/" << config.experiment << ".csv\n";
        return rc;
    } catch (const ncflow::UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
