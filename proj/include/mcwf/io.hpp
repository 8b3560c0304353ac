#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mcwf/errors.hpp"

namespace mcwf {

// 17 significant digits: doubles survive a write/read round trip bit-exactly.
inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

struct KeyValue {
    std::string key;
    std::string value;
};

// Flat key=value lines, UTF-8, '#' comments, blank lines ignored.
inline std::vector<KeyValue> parse_config_text(const std::string& text) {
    std::vector<KeyValue> out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    const auto trim = [](std::string s) {
        const auto notspace = [](unsigned char c) { return !std::isspace(c); };
        s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
        s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
        return s;
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("config line " + std::to_string(lineno) + ": expected key=value");
        KeyValue kv{trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
        if (kv.key.empty())
            throw ValidationError("config line " + std::to_string(lineno) + ": empty key");
        out.push_back(std::move(kv));
    }
    return out;
}

inline std::vector<KeyValue> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

namespace detail {

inline double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ValidationError("key '" + key + "': cannot parse '" + value + "' as a number");
    }
}

inline long long parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ValidationError("key '" + key + "': cannot parse '" + value + "' as an integer");
    }
}

} // namespace detail

// Fully resolved batch-run configuration. String keys double as the config
// file vocabulary and the CLI flag names.
struct RunConfig {
    std::string model = "mode";
    std::string method = "stepwise";
    std::string picture = "nui";

    long long cutoff = 128;
    double kappa = 1.0;
    double nTh = 0.0;
    double eta = 0.0;
    double etaIm = 0.0;
    double delta = 0.0;

    std::string init = "fock";
    long long initFock = 0;
    double initAlphaRe = 0.0;
    double initAlphaIm = 0.0;

    long long kCutoff = 8;
    double omegaRec = 1.0;
    double V = 0.0;
    long long KRatio = 1;
    double initK = 0.0;
    double initKWidth = 0.0;

    double dpLimit = 0.1;
    double dpOvershoot = 0.0; // 0 resolves to 10 * dpLimit
    double Dt = 0.05;
    double T = 5.0;

    double normTol = 0.001;
    long long maxIters = 5;

    double epsAbs = 1e-12;
    double epsRel = 1e-6;
    double dtMin = 1e-12;

    long long nTraj = 1;
    unsigned long long seed = 1000;
    long long jobs = 0;
    std::string sampling = "equal-time";
    long long renorm = 1;
    std::string out = ".";

    void apply(const KeyValue& kv) {
        const std::string& k = kv.key;
        const std::string& v = kv.value;
        if (k == "model") model = v;
        else if (k == "method") method = v;
        else if (k == "picture") picture = v;
        else if (k == "cutoff") cutoff = detail::parse_int(k, v);
        else if (k == "kappa") kappa = detail::parse_double(k, v);
        else if (k == "nTh") nTh = detail::parse_double(k, v);
        else if (k == "eta") eta = detail::parse_double(k, v);
        else if (k == "etaIm") etaIm = detail::parse_double(k, v);
        else if (k == "delta") delta = detail::parse_double(k, v);
        else if (k == "init") init = v;
        else if (k == "initFock") initFock = detail::parse_int(k, v);
        else if (k == "initAlphaRe") initAlphaRe = detail::parse_double(k, v);
        else if (k == "initAlphaIm") initAlphaIm = detail::parse_double(k, v);
        else if (k == "kCutoff") kCutoff = detail::parse_int(k, v);
        else if (k == "omegaRec") omegaRec = detail::parse_double(k, v);
        else if (k == "V") V = detail::parse_double(k, v);
        else if (k == "KRatio") KRatio = detail::parse_int(k, v);
        else if (k == "initK") initK = detail::parse_double(k, v);
        else if (k == "initKWidth") initKWidth = detail::parse_double(k, v);
        else if (k == "dpLimit") dpLimit = detail::parse_double(k, v);
        else if (k == "dpOvershoot") dpOvershoot = detail::parse_double(k, v);
        else if (k == "Dt") Dt = detail::parse_double(k, v);
        else if (k == "T") T = detail::parse_double(k, v);
        else if (k == "normTol") normTol = detail::parse_double(k, v);
        else if (k == "maxIters") maxIters = detail::parse_int(k, v);
        else if (k == "epsAbs") epsAbs = detail::parse_double(k, v);
        else if (k == "epsRel") epsRel = detail::parse_double(k, v);
        else if (k == "dtMin") dtMin = detail::parse_double(k, v);
        else if (k == "nTraj") nTraj = detail::parse_int(k, v);
        else if (k == "seed") seed = static_cast<unsigned long long>(detail::parse_int(k, v));
        else if (k == "jobs") jobs = detail::parse_int(k, v);
        else if (k == "sampling") sampling = v;
        else if (k == "renorm") renorm = detail::parse_int(k, v);
        else if (k == "out") out = v;
        else if (k == "version") { /* accepted so a manifest can be replayed */ }
        else throw ValidationError("unknown configuration key '" + k + "'");
    }

    // File values first, then flags on top.
    static RunConfig resolve(const std::vector<KeyValue>& file_kv,
                             const std::vector<KeyValue>& flag_kv) {
        RunConfig cfg;
        for (const auto& kv : file_kv) cfg.apply(kv);
        for (const auto& kv : flag_kv) cfg.apply(kv);
        if (cfg.dpOvershoot == 0.0) cfg.dpOvershoot = 10.0 * cfg.dpLimit;
        cfg.validate();
        return cfg;
    }

    void validate() const {
        const auto fail = [](const std::string& key, const std::string& why) {
            throw ValidationError("key '" + key + "': " + why);
        };
        if (model != "mode" && model != "particle") fail("model", "must be mode or particle");
        if (method != "stepwise" && method != "integrating" && method != "master" &&
            method != "oracle-gillespie" && method != "oracle-discrete")
            fail("method", "must be stepwise, integrating, master, oracle-gillespie or oracle-discrete");
        if (picture != "schroedinger" && picture != "interaction" && picture != "nui")
            fail("picture", "must be schroedinger, interaction or nui");
        if (model == "mode" && cutoff < 2) fail("cutoff", "must be >= 2");
        if (!(kappa > 0) || !std::isfinite(kappa)) fail("kappa", "must be positive and finite");
        if (!(nTh >= 0) || !std::isfinite(nTh)) fail("nTh", "must be >= 0 and finite");
        if (!std::isfinite(eta) || !std::isfinite(etaIm)) fail("eta", "must be finite");
        if (!std::isfinite(delta)) fail("delta", "must be finite");
        if (init != "fock" && init != "coherent") fail("init", "must be fock or coherent");
        if (initFock < 0 || (model == "mode" && initFock >= cutoff))
            fail("initFock", "must lie inside the basis");
        if (model == "particle") {
            if (KRatio < 1) fail("KRatio", "must be >= 1");
            if (kCutoff < KRatio) fail("kCutoff", "must be >= KRatio");
            if (!(omegaRec > 0)) fail("omegaRec", "must be positive");
        }
        if (method == "stepwise" || method == "oracle-discrete") {
            if (!(dpLimit > 0 && dpLimit < 1)) fail("dpLimit", "must lie in (0,1)");
            if (!(dpOvershoot > dpLimit)) fail("dpOvershoot", "must exceed dpLimit");
        }
        if (method == "integrating") {
            if (!(normTol > 0 && normTol < 0.1)) fail("normTol", "must lie in (0,0.1)");
            if (maxIters < 1) fail("maxIters", "must be >= 1");
        }
        if (!(Dt > 0) || !(Dt <= T)) fail("Dt", "need 0 < Dt <= T");
        if (std::abs(T / Dt - std::round(T / Dt)) > 1e-9 * (T / Dt)) fail("Dt", "must divide T");
        if (!(epsAbs >= 0) || !(epsRel >= 0) || (epsAbs == 0 && epsRel == 0))
            fail("epsAbs", "tolerances must be >= 0 and not both zero");
        if (!(dtMin > 0)) fail("dtMin", "must be positive");
        if (nTraj < 1) fail("nTraj", "must be >= 1");
        if (jobs < 0) fail("jobs", "must be >= 0");
        if (sampling != "equal-time" && sampling != "equal-steps")
            fail("sampling", "must be equal-time or equal-steps");
        if (renorm != 0 && renorm != 1) fail("renorm", "must be 0 or 1");
        if (sampling == "equal-steps" && nTraj != 1)
            fail("sampling", "equal-steps output is defined for nTraj=1");
    }

    // Full resolved configuration; replaying it reproduces the run bit for bit.
    std::vector<KeyValue> manifest(const std::string& version) const {
        std::vector<KeyValue> kv;
        kv.push_back({"version", version});
        kv.push_back({"model", model});
        kv.push_back({"method", method});
        kv.push_back({"picture", picture});
        kv.push_back({"cutoff", std::to_string(cutoff)});
        kv.push_back({"kappa", fmt17(kappa)});
        kv.push_back({"nTh", fmt17(nTh)});
        kv.push_back({"eta", fmt17(eta)});
        kv.push_back({"etaIm", fmt17(etaIm)});
        kv.push_back({"delta", fmt17(delta)});
        kv.push_back({"init", init});
        kv.push_back({"initFock", std::to_string(initFock)});
        kv.push_back({"initAlphaRe", fmt17(initAlphaRe)});
        kv.push_back({"initAlphaIm", fmt17(initAlphaIm)});
        kv.push_back({"kCutoff", std::to_string(kCutoff)});
        kv.push_back({"omegaRec", fmt17(omegaRec)});
        kv.push_back({"V", fmt17(V)});
        kv.push_back({"KRatio", std::to_string(KRatio)});
        kv.push_back({"initK", fmt17(initK)});
        kv.push_back({"initKWidth", fmt17(initKWidth)});
        kv.push_back({"dpLimit", fmt17(dpLimit)});
        kv.push_back({"dpOvershoot", fmt17(dpOvershoot)});
        kv.push_back({"Dt", fmt17(Dt)});
        kv.push_back({"T", fmt17(T)});
        kv.push_back({"normTol", fmt17(normTol)});
        kv.push_back({"maxIters", std::to_string(maxIters)});
        kv.push_back({"epsAbs", fmt17(epsAbs)});
        kv.push_back({"epsRel", fmt17(epsRel)});
        kv.push_back({"dtMin", fmt17(dtMin)});
        kv.push_back({"nTraj", std::to_string(nTraj)});
        kv.push_back({"seed", std::to_string(seed)});
        kv.push_back({"jobs", std::to_string(jobs)});
        kv.push_back({"sampling", sampling});
        kv.push_back({"renorm", std::to_string(renorm)});
        kv.push_back({"out", out});
        return kv;
    }
};

inline void write_kv_file(const std::string& path, const std::vector<KeyValue>& kv) {
    std::ofstream outf(path, std::ios::binary);
    if (!outf) throw ValidationError("cannot write '" + path + "'");
    for (const auto& [k, v] : kv) outf << k << "=" << v << "\n";
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
    std::ofstream outf(path, std::ios::binary);
    if (!outf) throw ValidationError("cannot write '" + path + "'");
    for (std::size_t i = 0; i < header.size(); ++i)
        outf << header[i] << (i + 1 < header.size() ? "," : "");
    outf << "\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            outf << fmt17(row[i]) << (i + 1 < row.size() ? "," : "");
        outf << "\n";
    }
}

} // namespace mcwf
