#pragma once

#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tlgamp/harness.hpp"

namespace tlgamp {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

} // namespace detail

/// Flat, line-oriented configuration: `section.key = value` with `#` comments
/// and `[a, b, c]` lists. Keys are unique; values are stored as trimmed text,
/// so parse(print(parse(f))) == parse(f).
class ConfigMap {
public:
    static ConfigMap parse_string(const std::string& text) {
        ConfigMap cfg;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = detail::trim(line);
            if (line.empty()) continue;
            const std::size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": expected 'key = value'");
            const std::string key = detail::trim(line.substr(0, eq));
            const std::string value = detail::trim(line.substr(eq + 1));
            if (key.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
            for (char c : key)
                if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'))
                    throw ConfigError("config line " + std::to_string(lineno) +
                                      ": invalid key character in '" + key + "'");
            if (cfg.values_.count(key))
                throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" +
                                  key + "'");
            cfg.values_[key] = value;
        }
        return cfg;
    }

    static ConfigMap parse_file(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw ConfigError("cannot open config file '" + path + "'");
        std::ostringstream ss;
        ss << f.rdbuf();
        return parse_string(ss.str());
    }

    std::string print() const {
        std::ostringstream out;
        for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
        return out.str();
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    const std::map<std::string, std::string>& values() const { return values_; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        return to_double(key, it->second);
    }

    long long get_int(const std::string& key, long long fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        return to_int(key, it->second);
    }

    bool get_bool(const std::string& key, bool fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw ConfigError("key '" + key + "': expected true/false, got '" + it->second + "'");
    }

    std::vector<std::string> get_list(const std::string& key,
                                      const std::vector<std::string>& fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        const std::string& v = it->second;
        if (v.size() < 2 || v.front() != '[' || v.back() != ']')
            throw ConfigError("key '" + key + "': expected a list '[a, b, c]', got '" + v + "'");
        std::vector<std::string> out;
        std::string inner = v.substr(1, v.size() - 2);
        std::istringstream ss(inner);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = detail::trim(item);
            if (!item.empty()) out.push_back(item);
        }
        return out;
    }

    std::vector<double> get_double_list(const std::string& key,
                                        const std::vector<double>& fallback) const {
        if (!has(key)) return fallback;
        std::vector<double> out;
        for (const std::string& s : get_list(key, {})) out.push_back(to_double(key, s));
        return out;
    }

    std::vector<long long> get_int_list(const std::string& key,
                                        const std::vector<long long>& fallback) const {
        if (!has(key)) return fallback;
        std::vector<long long> out;
        for (const std::string& s : get_list(key, {})) out.push_back(to_int(key, s));
        return out;
    }

private:
    static double to_double(const std::string& key, const std::string& s) {
        try {
            std::size_t pos = 0;
            const double v = std::stod(s, &pos);
            if (pos != s.size()) throw std::invalid_argument("trailing characters");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': expected a number, got '" + s + "'");
        }
    }

    static long long to_int(const std::string& key, const std::string& s) {
        try {
            std::size_t pos = 0;
            const long long v = std::stoll(s, &pos);
            if (pos != s.size()) throw std::invalid_argument("trailing characters");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': expected an integer, got '" + s + "'");
        }
    }

    std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Typed configuration <-> key/value map
// ---------------------------------------------------------------------------

inline ExperimentConfig experiment_from_config(const ConfigMap& c) {
    ExperimentConfig e;

    const std::string kind = c.get_string("scenario.kind", "nf_sns");
    if (kind == "nf_sns") e.scenario.kind = ScenarioKind::nf_sns;
    else if (kind == "nf_ss") e.scenario.kind = ScenarioKind::nf_ss;
    else if (kind == "ff_ss") e.scenario.kind = ScenarioKind::ff_ss;
    else throw ConfigError("key 'scenario.kind': unknown scenario '" + kind + "'");

    e.scenario.geometry.n_rx = static_cast<int>(c.get_int("scenario.n_rx", 256));
    e.scenario.geometry.n_tx = static_cast<int>(c.get_int("scenario.n_tx", 16));
    e.scenario.geometry.carrier_hz = c.get_double("scenario.carrier_hz", 30e9);
    e.scenario.n_paths = static_cast<int>(c.get_int("scenario.paths", 4));
    const auto dr = c.get_double_list("scenario.distance_range_m", {2.0, 10.0});
    if (dr.size() != 2 || !(dr[0] > 0.0) || dr[1] < dr[0])
        throw ConfigError("key 'scenario.distance_range_m': expected [min, max] with 0 < min <= max");
    e.scenario.distance_min_m = dr[0];
    e.scenario.distance_max_m = dr[1];
    e.scenario.ff_distance_m = c.get_double("scenario.ff_distance_m", 200.0);
    const std::string vrm = c.get_string("scenario.vr_model", "contiguous_block");
    if (vrm == "contiguous_block") e.scenario.vr_model = VisibilityModel::contiguous_block;
    else if (vrm == "markov") e.scenario.vr_model = VisibilityModel::markov;
    else throw ConfigError("key 'scenario.vr_model': unknown model '" + vrm + "'");
    const double vr_p10 = c.get_double("scenario.vr_p10", 0.05);
    e.vr_fraction_list = c.get_double_list("scenario.vr_fractions", {0.25});
    for (double f : e.vr_fraction_list)
        if (!(f > 0.0 && f <= 1.0))
            throw ConfigError("key 'scenario.vr_fractions': fractions must lie in (0,1]");
    e.scenario.vr_fraction = e.vr_fraction_list.front();
    e.scenario.vr_prior =
        MarkovPrior(std::min(std::max(e.scenario.vr_fraction, 0.01), 0.99), vr_p10);

    e.n_rf = static_cast<int>(c.get_int("protocol.n_rf", 8));
    const long long slots = c.get_int("protocol.slots", 16);
    e.k_slots = static_cast<int>(slots);
    e.pilot_len = static_cast<int>(c.get_int("protocol.pilot_len", slots * e.n_rf));
    if (e.pilot_len != e.k_slots * e.n_rf)
        throw ConfigError("constraint violated: protocol.pilot_len (M) must equal "
                          "protocol.slots (K) * protocol.n_rf, got " +
                          std::to_string(e.pilot_len) + " != " + std::to_string(e.k_slots) + " * " +
                          std::to_string(e.n_rf));
    e.phase1_subframes =
        static_cast<int>(c.get_int("protocol.phase1_subframes", 3LL * e.scenario.n_paths));
    e.aod_grid_size =
        static_cast<int>(c.get_int("protocol.aod_grid", 4LL * e.scenario.geometry.n_tx));
    e.q_size = static_cast<int>(c.get_int("protocol.q_size", 2LL * e.scenario.geometry.n_rx));
    e.snr_db_list = c.get_double_list("protocol.snr_db", {10.0});
    {
        std::vector<long long> defaults = {48, 96, 128, 160, 192};
        std::vector<long long> ms = c.get_int_list("protocol.pilot_lens", defaults);
        e.pilot_len_list.clear();
        for (long long m : ms) e.pilot_len_list.push_back(static_cast<int>(m));
    }
    e.distance_list_m = c.get_double_list("protocol.distances_m",
                                          {3.0, 5.0, 10.0, 15.0, 30.0, 60.0, 120.0, 200.0});

    e.gamp.xi = c.get_double("gamp.xi", 1e-3);
    e.gamp.eta = c.get_double("gamp.eta", 1e-6);
    e.gamp.p10 = c.get_double("gamp.p10", 0.05);
    e.gamp.phi_init = c.get_double("gamp.phi_init", 0.5);
    e.gamp.max_iter = static_cast<int>(c.get_int("gamp.max_iter", 20));
    e.gamp.tol = c.get_double("gamp.tol", 1e-5);
    e.gamp.prob_clamp = c.get_double("gamp.prob_clamp", 1e-12);
    e.gamp.var_floor = c.get_double("gamp.var_floor", 1e-14);
    e.gamp.damping = c.get_double("gamp.damping", 0.7);
    e.gamp.onsager = c.get_bool("gamp.onsager", true);
    const std::string mode = c.get_string("gamp.mode", "vectorized_approx");
    if (mode == "vectorized_approx") e.gamp.mode = GampMode::vectorized_approx;
    else if (mode == "edge_exact") e.gamp.mode = GampMode::edge_exact;
    else throw ConfigError("key 'gamp.mode': unknown mode '" + mode + "'");

    e.baselines.clear();
    for (const std::string& b : c.get_list("baselines", {"ls", "oracle_vr", "oracle_aod"})) {
        if (b == "ls") e.baselines.push_back(BaselineKind::ls);
        else if (b == "oracle_vr") e.baselines.push_back(BaselineKind::oracle_vr);
        else if (b == "oracle_aod") e.baselines.push_back(BaselineKind::oracle_aod);
        else if (b == "oracle_both") e.baselines.push_back(BaselineKind::oracle_both);
        else if (b == "frozen_phi") e.baselines.push_back(BaselineKind::frozen_phi);
        else throw ConfigError("key 'baselines': unknown estimator '" + b + "'");
    }

    e.n_trials = static_cast<int>(c.get_int("trials.count", 100));
    e.base_seed = static_cast<std::uint64_t>(c.get_int("trials.base_seed", 1));
    e.calib_noise_draws = static_cast<int>(c.get_int("trials.calib_noise_draws", 16));

    e.validate();
    return e;
}

namespace detail {

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

template <typename T, typename Fn>
inline std::string fmt_list(const std::vector<T>& xs, Fn&& fmt) {
    std::string out = "[";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ", ";
        out += fmt(xs[i]);
    }
    return out + "]";
}

} // namespace detail

/// Fully resolved configuration echo (every key explicit).
inline ConfigMap config_to_map(const ExperimentConfig& e) {
    ConfigMap c;
    const char* kind = e.scenario.kind == ScenarioKind::nf_sns   ? "nf_sns"
                       : e.scenario.kind == ScenarioKind::nf_ss ? "nf_ss"
                                                                : "ff_ss";
    c.set("scenario.kind", kind);
    c.set("scenario.n_rx", std::to_string(e.scenario.geometry.n_rx));
    c.set("scenario.n_tx", std::to_string(e.scenario.geometry.n_tx));
    c.set("scenario.carrier_hz", detail::fmt_double(e.scenario.geometry.carrier_hz));
    c.set("scenario.paths", std::to_string(e.scenario.n_paths));
    c.set("scenario.distance_range_m",
          "[" + detail::fmt_double(e.scenario.distance_min_m) + ", " +
              detail::fmt_double(e.scenario.distance_max_m) + "]");
    c.set("scenario.ff_distance_m", detail::fmt_double(e.scenario.ff_distance_m));
    c.set("scenario.vr_model", e.scenario.vr_model == VisibilityModel::contiguous_block
                                   ? "contiguous_block"
                                   : "markov");
    c.set("scenario.vr_p10", detail::fmt_double(e.scenario.vr_prior.p10));
    c.set("scenario.vr_fractions",
          detail::fmt_list(e.vr_fraction_list, [](double v) { return detail::fmt_double(v); }));
    c.set("protocol.n_rf", std::to_string(e.n_rf));
    c.set("protocol.slots", std::to_string(e.k_slots));
    c.set("protocol.pilot_len", std::to_string(e.pilot_len));
    c.set("protocol.phase1_subframes", std::to_string(e.phase1_subframes));
    c.set("protocol.aod_grid", std::to_string(e.aod_grid_size));
    c.set("protocol.q_size", std::to_string(e.q_size));
    c.set("protocol.snr_db",
          detail::fmt_list(e.snr_db_list, [](double v) { return detail::fmt_double(v); }));
    c.set("protocol.pilot_lens",
          detail::fmt_list(e.pilot_len_list, [](int v) { return std::to_string(v); }));
    c.set("protocol.distances_m",
          detail::fmt_list(e.distance_list_m, [](double v) { return detail::fmt_double(v); }));
    c.set("gamp.xi", detail::fmt_double(e.gamp.xi));
    c.set("gamp.eta", detail::fmt_double(e.gamp.eta));
    c.set("gamp.p10", detail::fmt_double(e.gamp.p10));
    c.set("gamp.phi_init", detail::fmt_double(e.gamp.phi_init));
    c.set("gamp.max_iter", std::to_string(e.gamp.max_iter));
    c.set("gamp.tol", detail::fmt_double(e.gamp.tol));
    c.set("gamp.prob_clamp", detail::fmt_double(e.gamp.prob_clamp));
    c.set("gamp.var_floor", detail::fmt_double(e.gamp.var_floor));
    c.set("gamp.damping", detail::fmt_double(e.gamp.damping));
    c.set("gamp.onsager", e.gamp.onsager ? "true" : "false");
    c.set("gamp.mode",
          e.gamp.mode == GampMode::vectorized_approx ? "vectorized_approx" : "edge_exact");
    {
        std::vector<std::string> names;
        for (BaselineKind b : e.baselines) names.push_back(baseline_name(b));
        c.set("baselines", detail::fmt_list(names, [](const std::string& s) { return s; }));
    }
    c.set("trials.count", std::to_string(e.n_trials));
    c.set("trials.base_seed", std::to_string(e.base_seed));
    c.set("trials.calib_noise_draws", std::to_string(e.calib_noise_draws));
    return c;
}

// ---------------------------------------------------------------------------
// CSV emission ('.' decimal, dB to 4 places, deterministic formatting)
// ---------------------------------------------------------------------------

inline std::string sweep_csv(const SweepResult& r) {
    std::ostringstream out;
    out << "axis_value,estimator,median_db,p10_db,p90_db,n,mean_db\n";
    char buf[256];
    for (const SweepCell& c : r.cells) {
        std::snprintf(buf, sizeof(buf), "%.6g,%s,%.4f,%.4f,%.4f,%d,%.4f\n", c.axis_value,
                      c.estimator.c_str(), c.median_db, c.p10_db, c.p90_db, c.n, c.mean_db);
        out << buf;
    }
    return out.str();
}

} // namespace tlgamp
