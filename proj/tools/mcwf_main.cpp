// Batch front-end: dispatches the trajectory engines, the direct master
// solver and the birth-death oracles from flags or a key=value config file,
// and writes series.csv, stats.csv and a replayable manifest.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "mcwf/runner.hpp"

namespace {

void print_usage() {
    std::cout <<
        R"(usage: mcwf [--config FILE] [--key value ...]

Flags override config-file values; every key below is valid in both places.

  run selection
    --model mode|particle          physical system (default mode)
    --method stepwise|integrating|master|oracle-gillespie|oracle-discrete
    --picture schroedinger|interaction|nui   (default nui)
    --out DIR                      output directory (default .)

  mode model
    --cutoff N      Fock-space truncation          --kappa X   decay rate (default 1)
    --nTh X         thermal occupancy              --eta X     drive amplitude (real part)
    --etaIm X       drive amplitude (imag part)    --delta X   drive detuning
    --init fock|coherent  --initFock N  --initAlphaRe X  --initAlphaIm X

  particle model
    --kCutoff N  --omegaRec X  --V X  --KRatio N  --initK X  --initKWidth X

  trajectory controls
    --dpLimit X     max total jump probability per step (default 0.1)
    --dpOvershoot X step-rejection threshold (default 10*dpLimit)
    --normTol X     integrating-method norm tolerance (default 0.001)
    --maxIters N    integrating-method retrieval iterations (default 5)
    --Dt X --T X    sampling interval and final time
    --epsAbs X --epsRel X --dtMin X   ODE stepper tolerances
    --nTraj N --seed S --jobs N
    --sampling equal-time|equal-steps   (equal-steps: one row per step, nTraj=1)
    --renorm 0|1    per-step exact renormalization (default 1)

Outputs: series.csv (t,re_a,im_a,n,var_n[,...]), stats.csv (key=value),
manifest (replayable via --config manifest).
Exit codes: 0 ok, 2 invalid configuration, 3 numeric failure, 4 basis cutoff breach.
)";
}

std::string json_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out.push_back(c);
    }
    return out;
}

int fail(const char* kind, const std::string& message, int code) {
    std::cerr << "{\"error\":\"" << kind << "\",\"message\":\"" << json_escape(message)
              << "\",\"exit\":" << code << "}\n";
    return code;
}

} // namespace

int main(int argc, char** argv) {
    std::vector<mcwf::KeyValue> file_kv, flag_kv;
    try {
        for (int i = 1; i < argc; ++i) {
            std::string arg = argv[i];
            if (arg == "--help" || arg == "-h") {
                print_usage();
                return 0;
            }
            if (arg == "--version") {
                std::cout << mcwf::kVersion << "\n";
                return 0;
            }
            if (arg.rfind("--", 0) != 0)
                throw mcwf::ValidationError("expected a --flag, got '" + arg + "'");
            if (i + 1 >= argc) throw mcwf::ValidationError("flag '" + arg + "' needs a value");
            std::string key = arg.substr(2);
            std::string value = argv[++i];
            if (key == "config")
                file_kv = mcwf::parse_config_file(value);
            else
                flag_kv.push_back({std::move(key), std::move(value)});
        }
        const mcwf::RunConfig cfg = mcwf::RunConfig::resolve(file_kv, flag_kv);
        mcwf::run(cfg);
        return 0;
    } catch (const mcwf::ValidationError& e) {
        return fail("validation", e.what(), 2);
    } catch (const mcwf::TruncationError& e) {
        return fail("truncation", e.what(), 4);
    } catch (const mcwf::Error& e) {
        return fail("numeric", e.what(), 3);
    } catch (const std::exception& e) {
        return fail("internal", e.what(), 3);
    }
}
