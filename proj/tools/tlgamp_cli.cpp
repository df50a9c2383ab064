#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include "tlgamp/config.hpp"
#include "tlgamp/harness.hpp"
#include "tlgamp/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitDiverged = 2;
constexpr int kExitIo = 3;

std::uint64_t resolve_base_seed(const tlgamp::ExperimentConfig& cfg, std::int64_t seed_flag) {
    if (seed_flag >= 0) return static_cast<std::uint64_t>(seed_flag);
    if (const char* env = std::getenv("TLGAMP_BASE_SEED"))
        return static_cast<std::uint64_t>(std::strtoull(env, nullptr, 10));
    return cfg.base_seed;
}

json manifest_for(const tlgamp::ExperimentConfig& cfg, const std::string& command,
                  const std::vector<std::string>& outputs, double wall_time_s) {
    json m;
    m["artifact_version"] = tlgamp::kVersion;
    m["command"] = command;
    m["base_seed"] = cfg.base_seed;
    m["outputs"] = outputs;
    m["wall_time_s"] = wall_time_s;
    m["generated_at"] = static_cast<std::int64_t>(
        std::chrono::duration_cast<std::chrono::seconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count());
    json echo;
    for (const auto& [k, v] : tlgamp::config_to_map(cfg).values()) echo[k] = v;
    m["config"] = echo;
    return m;
}

bool write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) return false;
    out << content;
    return static_cast<bool>(out);
}

int cmd_validate(const std::string& config_path) {
    try {
        const auto map = tlgamp::ConfigMap::parse_file(config_path);
        const auto cfg = tlgamp::experiment_from_config(map);
        std::cout << tlgamp::config_to_map(cfg).print();
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
}

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

int cmd_estimate(const std::string& config_path, std::int64_t seed_flag,
                 const std::string& dump_dir) {
    tlgamp::ExperimentConfig cfg;
    try {
        cfg = tlgamp::experiment_from_config(tlgamp::ConfigMap::parse_file(config_path));
        cfg.base_seed = resolve_base_seed(cfg, seed_flag);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    const auto t0 = std::chrono::steady_clock::now();
    tlgamp::TrialSettings s;
    s.snr_db = cfg.snr_db_list.front();
    s.vr_fraction = cfg.vr_fraction_list.front();
    s.pilot_len = cfg.pilot_len;
    s.axis_value = s.snr_db;

    tlgamp::TrialCapture cap;
    tlgamp::TrialResult res = tlgamp::run_trial(cfg, s, 0, &cap);

    std::error_code ec;
    fs::create_directories(dump_dir, ec);
    if (ec) {
        std::cerr << "i/o error: cannot create '" << dump_dir << "'\n";
        return kExitIo;
    }

    std::string sub = "path,antenna,t_hat_re,t_hat_im,truth_re,truth_im,belief,true_mask\n";
    std::string ang = "path,q,c_hat_re,c_hat_im\n";
    std::string trc = "path,iteration,nmse_db,beta_hat,mean_belief\n";
    for (std::size_t l = 0; l < cap.estimates.size(); ++l) {
        const auto& e = cap.estimates[l];
        for (int n = 0; n < e.t_hat.size(); ++n) {
            sub += std::to_string(l) + "," + std::to_string(n) + "," + fmt17(e.t_hat[n].real()) +
                   "," + fmt17(e.t_hat[n].imag()) + "," + fmt17(cap.truths[l][n].real()) + "," +
                   fmt17(cap.truths[l][n].imag()) + "," + fmt17(e.s_belief[n]) + "," +
                   fmt17(cap.masks[l][n]) + "\n";
        }
        for (int q = 0; q < e.c_hat.size(); ++q)
            ang += std::to_string(l) + "," + std::to_string(q) + "," + fmt17(e.c_hat[q].real()) +
                   "," + fmt17(e.c_hat[q].imag()) + "\n";
        char buf[192];
        for (const tlgamp::TraceRow& row : e.trace) {
            std::snprintf(buf, sizeof(buf), "%zu,%d,%.6f,%.17g,%.17g\n", l, row.iteration,
                          row.nmse_db, row.beta_hat, row.mean_belief);
            trc += buf;
        }
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const fs::path dir(dump_dir);
    bool io_ok = write_file(dir / "subchannels.csv", sub) &&
                 write_file(dir / "angular.csv", ang) && write_file(dir / "trace.csv", trc);
    json m = manifest_for(cfg, "estimate", {"subchannels.csv", "angular.csv", "trace.csv"}, wall);
    json metrics;
    for (const auto& [name, db] : res.nmse_db) metrics[name] = db;
    m["nmse_db"] = metrics;
    m["sigma2"] = res.sigma2;
    m["aod_warnings"] = res.aod_warnings;
    io_ok = io_ok && write_file(dir / "manifest.json", m.dump(2) + "\n");
    if (!io_ok) {
        std::cerr << "i/o error: cannot write dumps to '" << dump_dir << "'\n";
        return kExitIo;
    }

    std::cout << "trial 0 @ snr " << s.snr_db << " dB, sigma2 " << res.sigma2 << "\n";
    for (const auto& [name, db] : res.nmse_db)
        std::printf("  %-12s %8.4f dB%s\n", name.c_str(), db,
                    res.diverged.at(name) ? "  (diverged)" : "");
    const bool any_diverged = res.diverged.count("tl_gamp") && res.diverged.at("tl_gamp");
    return any_diverged ? kExitDiverged : 0;
}

int cmd_sweep(const std::string& config_path, const std::string& axis_name,
              std::int64_t seed_flag, const std::string& out_csv, int workers) {
    tlgamp::ExperimentConfig cfg;
    tlgamp::SweepAxis axis;
    try {
        cfg = tlgamp::experiment_from_config(tlgamp::ConfigMap::parse_file(config_path));
        cfg.base_seed = resolve_base_seed(cfg, seed_flag);
        if (axis_name == "snr") axis = tlgamp::SweepAxis::snr;
        else if (axis_name == "vr") axis = tlgamp::SweepAxis::vr_size;
        else if (axis_name == "pilot") axis = tlgamp::SweepAxis::pilot_len;
        else if (axis_name == "distance") axis = tlgamp::SweepAxis::distance;
        else if (axis_name == "iterations") axis = tlgamp::SweepAxis::iterations;
        else throw tlgamp::ConfigError("unknown sweep axis '" + axis_name + "'");
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    const tlgamp::SweepResult result = tlgamp::sweep(cfg, axis, workers);
    const std::string csv = tlgamp::sweep_csv(result);
    if (!write_file(out_csv, csv)) {
        std::cerr << "i/o error: cannot write '" << out_csv << "'\n";
        return kExitIo;
    }
    json m = manifest_for(cfg, std::string("sweep --axis ") + axis_name, {out_csv},
                          result.wall_time_s);
    if (!write_file(out_csv + ".manifest.json", m.dump(2) + "\n")) {
        std::cerr << "i/o error: cannot write manifest\n";
        return kExitIo;
    }

    std::printf("%-10s %-14s %10s %10s %10s %6s\n", "axis", "estimator", "median_db", "p10_db",
                "p90_db", "n");
    for (const auto& c : result.cells)
        std::printf("%-10.6g %-14s %10.4f %10.4f %10.4f %6d\n", c.axis_value,
                    c.estimator.c_str(), c.median_db, c.p10_db, c.p90_db, c.n);
    std::printf("wrote %s (%zu rows) in %.1f s\n", out_csv.c_str(), result.cells.size(),
                result.wall_time_s);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatially non-stationary XL-MIMO channel estimation testbench"};
    app.set_version_flag("--version", tlgamp::kVersion);
    app.require_subcommand(1);

    std::string config_path;
    std::int64_t seed = -1;
    int workers = static_cast<int>(std::thread::hardware_concurrency());
    if (workers < 1) workers = 1;

    auto* validate = app.add_subcommand("validate", "Parse a config, print resolved values");
    validate->add_option("config", config_path, "config file")->required();

    std::string dump_dir = "estimate_out";
    auto* estimate = app.add_subcommand("estimate", "Run one trial and dump per-path results");
    estimate->add_option("config", config_path, "config file")->required();
    estimate->add_option("--seed", seed, "base seed override");
    estimate->add_option("--out", dump_dir, "dump directory");

    std::string axis = "snr";
    std::string out_csv = "sweep.csv";
    auto* sweep = app.add_subcommand("sweep", "Monte Carlo sweep, writes CSV + manifest");
    sweep->add_option("config", config_path, "config file")->required();
    sweep->add_option("--axis", axis, "snr|vr|pilot|distance|iterations")->required();
    sweep->add_option("--seed", seed, "base seed override");
    sweep->add_option("--out", out_csv, "output CSV path");
    sweep->add_option("--workers", workers, "worker thread count");

    CLI11_PARSE(app, argc, argv);

    if (validate->parsed()) return cmd_validate(config_path);
    if (estimate->parsed()) return cmd_estimate(config_path, seed, dump_dir);
    return cmd_sweep(config_path, axis, seed, out_csv, workers);
}
