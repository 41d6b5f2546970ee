// mena: desk-scale OpenMENA stack against a simulated memristor crossbar.
//
// Subcommands: simulate-serve, program, read-map, digits, robot, gen-data.
// Exit codes: 0 success, 1 experiment/runtime error, 2 usage error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mena/config.hpp"
#include "mena/device_sim.hpp"
#include "mena/errors.hpp"
#include "mena/pipelines.hpp"
#include "mena/programming.hpp"
#include "mena/wire_protocol.hpp"

namespace {

struct CliOptions {
    mena::ExperimentConfig cfg;
    std::string config_path;
    std::string seed_str;
    std::string method_str;
    std::string backend_str;
    std::string dataset;
    std::string out_dir;
    double split = -1.0;
};

/// Layer the sources: defaults < MENA_SEED < config file < CLI flags.
void assemble_config(CliOptions& opt) {
    if (const char* env_seed = std::getenv("MENA_SEED")) {
        std::map<std::string, std::string> kv{{"seed", env_seed}};
        mena::apply_kv(opt.cfg, kv);
    }
    if (!opt.config_path.empty()) {
        mena::apply_kv(opt.cfg, mena::load_kv_file(opt.config_path));
    }
    std::map<std::string, std::string> kv;
    if (!opt.seed_str.empty()) kv["seed"] = opt.seed_str;
    if (!opt.method_str.empty()) kv["method"] = opt.method_str;
    if (!opt.backend_str.empty()) kv["backend"] = opt.backend_str;
    if (!opt.dataset.empty()) kv["dataset"] = opt.dataset;
    if (!opt.out_dir.empty()) kv["out"] = opt.out_dir;
    if (opt.split >= 0.0) kv["split"] = std::to_string(opt.split);
    mena::apply_kv(opt.cfg, kv);
    mena::validate(opt.cfg);
}

void add_common_flags(CLI::App* sub, CliOptions& opt) {
    sub->add_option("--config", opt.config_path,
                    "key=value config file (CLI flags override it)");
    sub->add_option("--seed", opt.seed_str, "experiment seed");
    sub->add_option("--method", opt.method_str, "programming method")
        ->check(CLI::IsMember({"vipi", "pi"}));
    sub->add_option("--backend", opt.backend_str,
                    "direct (default) or tcp:<host:port>");
    sub->add_option("--out", opt.out_dir, "output directory");
}

std::filesystem::path ensure_out_dir(const mena::ExperimentConfig& cfg) {
    std::filesystem::path dir(cfg.out_dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::vector<double> load_targets_csv(const std::string& path, int rows,
                                     int cols) {
    const std::string text = mena::read_text_file(path);
    std::vector<double> targets;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field;
        while (std::getline(ls, field, ',')) {
            try {
                targets.push_back(std::stod(field));
            } catch (const std::exception&) {
                throw mena::IngestionError("bad value in " + path + " line " +
                                           std::to_string(lineno));
            }
        }
    }
    if (targets.size() != static_cast<std::size_t>(rows) * cols) {
        throw mena::IngestionError(
            "targets CSV must hold " + std::to_string(rows) + "x" +
            std::to_string(cols) + " values, got " +
            std::to_string(targets.size()));
    }
    return targets;
}

int cmd_simulate_serve(CliOptions& opt, const std::string& listen,
                       int max_sessions) {
    assemble_config(opt);
    mena::CrossbarModel model(
        8, 8, opt.cfg.variability,
        mena::stage_seed(opt.cfg.seed, mena::SeedSalt::DEVICE));

    if (listen.empty()) {
        // Serial-port style session over stdio.
        mena::wire::StreamTransport transport(std::cin, std::cout);
        mena::wire::serve(model, transport);
        return 0;
    }
    const mena::BackendSpec spec = mena::parse_backend_spec(listen);
    if (spec.kind != mena::BackendSpec::Kind::TCP) {
        throw mena::ConfigError("--listen expects tcp:<host:port>");
    }
    mena::wire::TcpListener listener(spec.host, spec.port);
    std::cerr << "listening on " << spec.host << ":" << listener.port()
              << "\n";
    for (int s = 0; max_sessions == 0 || s < max_sessions; ++s) {
        auto transport = listener.accept();
        mena::wire::serve(model, *transport);
    }
    return 0;
}

int cmd_program(CliOptions& opt, const std::string& targets_path) {
    assemble_config(opt);
    mena::BackendBundle bundle = mena::make_backend(opt.cfg);
    const auto targets =
        load_targets_csv(targets_path, bundle.backend->rows(),
                         bundle.backend->cols());
    const mena::ArrayReport report = mena::program_array(
        *bundle.backend, targets, opt.cfg.vipi, opt.cfg.method);

    const auto dir = ensure_out_dir(opt.cfg);
    mena::write_text_file((dir / "program_report.json").string(),
                          mena::array_report_json(report));
    if (bundle.model) {
        mena::save_weight_map(*bundle.model, (dir / "map.csv").string(),
                              (dir / "map.meta").string());
    }
    std::cout << "programmed " << report.converged_count << "/"
              << report.rows * report.cols << " cells, e_tot=" << report.e_tot
              << "\n";
    return report.completed ? 0 : 1;
}

int cmd_read_map(CliOptions& opt) {
    assemble_config(opt);
    if (opt.cfg.backend.kind != mena::BackendSpec::Kind::DIRECT) {
        throw mena::ConfigError(
            "read-map dumps exact simulator state; it requires the direct "
            "backend");
    }
    mena::CrossbarModel model(
        8, 8, opt.cfg.variability,
        mena::stage_seed(opt.cfg.seed, mena::SeedSalt::DEVICE));
    const auto dir = ensure_out_dir(opt.cfg);
    mena::save_weight_map(model, (dir / "map.csv").string(),
                          (dir / "map.meta").string());
    std::cout << "wrote " << (dir / "map.csv").string() << "\n";
    return 0;
}

int cmd_digits(CliOptions& opt) {
    assemble_config(opt);
    const mena::DigitsResult result = mena::run_digits_experiment(opt.cfg);
    const auto dir = ensure_out_dir(opt.cfg);
    mena::write_text_file(
        (dir / "digits_report.json").string(),
        mena::digits_report_json(result.report, mena::timestamp_now()));
    mena::write_text_file((dir / "digits_sweep.csv").string(),
                          mena::digits_sweep_csv(result.report));
    std::cout << "digits [" << result.report.method
              << "] best accuracy " << result.report.best_accuracy
              << " at threshold " << result.report.best_threshold
              << " (software " << result.report.software_best_accuracy
              << ")\n";
    return 0;
}

int cmd_robot(CliOptions& opt) {
    assemble_config(opt);
    const mena::RobotResult result = mena::run_robot_experiment(opt.cfg);
    const auto dir = ensure_out_dir(opt.cfg);
    mena::write_text_file(
        (dir / "robot_report.json").string(),
        mena::robot_report_json(result.report, mena::timestamp_now()));
    mena::write_text_file((dir / "robot_predictions.csv").string(),
                          mena::robot_predictions_csv(result.predictions));
    std::cout << "robot [" << result.report.method << "] rmse chip "
              << result.report.rmse_chip_finetuned << " (raw "
              << result.report.rmse_chip_raw << ", software "
              << result.report.rmse_software << ")\n";
    return 0;
}

int cmd_gen_data(CliOptions& opt, int n) {
    assemble_config(opt);
    const auto rows = mena::generate_trajectory(
        mena::stage_seed(opt.cfg.seed, mena::SeedSalt::TRAJECTORY), n);
    const auto dir = ensure_out_dir(opt.cfg);
    const auto path = dir / "trajectory.csv";
    mena::write_text_file(path.string(), mena::trajectory_csv(rows));
    std::cout << "wrote " << rows.size() << " rows to " << path.string()
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"OpenMENA crossbar stack on a simulated device"};
    app.require_subcommand(1);

    CliOptions opt;
    std::string listen;
    int max_sessions = 0;
    std::string targets_path;
    int gen_n = 2000;

    auto* serve = app.add_subcommand(
        "simulate-serve",
        "run the firmware protocol endpoint (stdio by default)");
    add_common_flags(serve, opt);
    serve->add_option("--listen", listen, "tcp:<host:port> listening endpoint");
    serve->add_option("--max-sessions", max_sessions,
                      "stop after this many sessions (0 = forever)");

    auto* program = app.add_subcommand(
        "program", "program a targets CSV into the crossbar");
    add_common_flags(program, opt);
    program->add_option("--targets", targets_path, "rows x cols CSV of weights")
        ->required();

    auto* read_map = app.add_subcommand(
        "read-map", "dump the seeded conductance map and metadata");
    add_common_flags(read_map, opt);

    auto* digits = app.add_subcommand(
        "digits", "digit-classification experiment");
    add_common_flags(digits, opt);
    digits->add_option("--dataset", opt.dataset, "digits CSV path");
    digits->add_option("--split", opt.split, "train fraction (0,1)");

    auto* robot = app.add_subcommand(
        "robot", "robot-command regression experiment");
    add_common_flags(robot, opt);
    robot->add_option("--dataset", opt.dataset, "trajectory CSV path");
    robot->add_option("--split", opt.split, "train fraction (0,1)");

    auto* gen = app.add_subcommand(
        "gen-data", "generate a synthetic trajectory CSV");
    add_common_flags(gen, opt);
    gen->add_option("--n", gen_n, "number of rows (>= 100)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << std::flush;
        return 2;
    }

    try {
        if (serve->parsed()) return cmd_simulate_serve(opt, listen, max_sessions);
        if (program->parsed()) return cmd_program(opt, targets_path);
        if (read_map->parsed()) return cmd_read_map(opt);
        if (digits->parsed()) return cmd_digits(opt);
        if (robot->parsed()) return cmd_robot(opt);
        if (gen->parsed()) return cmd_gen_data(opt, gen_n);
    } catch (const mena::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
