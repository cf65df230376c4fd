// Batch front end: simulate, cost, value, hjb, verify, xval, report.

#include "exitctrl/exitctrl.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace exitctrl;

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kConfigError = 2;
constexpr int kNumericalError = 3;

struct Options {
    std::string config;
    std::string out = "run";
    std::optional<std::uint64_t> seed;
    std::string x0;
    std::string suite = "all";
    std::optional<std::size_t> paths;
    std::optional<double> dt;
    std::string grid;
};

std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("", "cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<double> parse_csv_numbers(const std::string& text, const std::string& path) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError(path, "expected comma-separated numbers, got '" + text + "'");
        }
    }
    if (v.empty()) throw ConfigError(path, "expected at least one number");
    return v;
}

/// Applies command-line overrides to the run document.
json apply_overrides(json doc, const Options& o) {
    if (!doc.is_object()) throw ConfigError("", "run document must be a JSON object");
    if (o.seed) doc["simulation"]["seed"] = *o.seed;
    if (o.paths) doc["simulation"]["paths"] = *o.paths;
    if (o.dt) doc["simulation"]["dt"] = *o.dt;
    if (!o.x0.empty()) doc["x0"] = parse_csv_numbers(o.x0, "/x0");
    if (!o.grid.empty()) {
        json nodes = json::array();
        for (double n : parse_csv_numbers(o.grid, "/grid/nodes")) {
            if (n < 1 || n != std::floor(n)) throw ConfigError("/grid/nodes", "expected positive integers");
            nodes.push_back(static_cast<std::size_t>(n));
        }
        doc["grid"]["nodes"] = nodes;
    }
    return doc;
}

class Run {
public:
    Run(std::string command, const Options& o) : command_(std::move(command)), dir_(o.out) {
        fs::create_directories(dir_);
    }

    template <class F>
    auto stage(const std::string& name, F&& f) {
        const auto t0 = std::chrono::steady_clock::now();
        auto result = f();
        const auto t1 = std::chrono::steady_clock::now();
        timings_[name] = std::chrono::duration<double>(t1 - t0).count();
        return result;
    }

    void write(const std::string& name, const std::string& content) {
        std::ofstream os(dir_ / name, std::ios::binary);
        os << content;
        if (!os) throw Error("cannot write " + (dir_ / name).string());
        artifacts_.push_back(name);
    }
    void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

    void set_inputs(const json& inputs, std::uint64_t seed) {
        inputs_text_ = inputs.dump(2) + "\n";
        seed_ = seed;
        write("inputs.json", inputs_text_);
    }

    void finish() {
        json meta{{"stage_seconds", timings_},
                  {"finished_unix",
                   std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
                       .count()},
                  {"threads", worker_count()}};
        std::ofstream(dir_ / "metadata.json") << meta.dump(2) << "\n";
        std::vector<std::string> stages;
        for (const auto& [k, _] : timings_) stages.push_back(k);
        json manifest{{"command", command_},
                      {"version", EXITCTRL_VERSION},
                      {"master_seed", seed_},
                      {"digest", sha256_hex(inputs_text_)},
                      {"inputs", "inputs.json"},
                      {"artifacts", artifacts_},
                      {"stages", stages},
                      {"metadata", "metadata.json"}};
        std::ofstream(dir_ / "manifest.json") << manifest.dump(2) << "\n";
    }

private:
    std::string command_;
    fs::path dir_;
    std::vector<std::string> artifacts_;
    std::map<std::string, double> timings_;
    std::string inputs_text_;
    std::uint64_t seed_ = 0;
};

std::string report_table(const std::vector<CheckReport>& reports) {
    std::ostringstream os;
    os << std::left << std::setw(36) << "check" << std::setw(9) << "status" << std::setw(16) << "measured"
       << "tolerance\n";
    for (const auto& r : reports)
        os << std::left << std::setw(36) << r.name << std::setw(9) << to_string(r.status) << std::setw(16)
           << r.measured << r.tolerance << "\n";
    return os.str();
}

std::string chain_csv(const std::vector<ViscosityTestBundle>& bundles) {
    std::ostringstream os;
    os.precision(17);
    os << "epsilon,gap12,gap34,stderr12,stderr34\n";
    for (const auto& b : bundles)
        os << b.epsilon << ',' << b.gap12 << ',' << b.gap34 << ',' << b.stderr12 << ',' << b.stderr34 << '\n';
    return os.str();
}

std::string holder_csv(const std::vector<std::pair<double, double>>& rows) {
    std::ostringstream os;
    os.precision(17);
    os << "separation,abs_du\n";
    for (const auto& [s, du] : rows) os << s << ',' << du << '\n';
    return os.str();
}

int run_pipeline(const std::string& command, const Options& o) {
    if (o.config.empty()) throw ConfigError("", "--config is required");
    const json raw = [&] {
        try {
            return json::parse(read_file(o.config));
        } catch (const json::parse_error& e) {
            throw ConfigError("", std::string("invalid JSON: ") + e.what());
        }
    }();
    const json doc = apply_overrides(raw, o);
    const RunConfig rc = run_config_from_json(doc);
    const auto& p = rc.problem;
    const auto& sim = rc.verify.sim;

    Run run(command, o);
    json inputs{{"command", command}, {"config", doc}};
    if (command == "verify") inputs["suite"] = o.suite;
    run.set_inputs(inputs, sim.master_seed);

    int code = kOk;
    json summary{{"command", command}, {"problem", p.name}, {"x0", rc.x0}, {"master_seed", sim.master_seed}};

    if (command == "simulate") {
        const auto bundle = run.stage("simulate", [&] { return simulate(p, Policy::constant(rc.cost_policy), rc.x0, sim); });
        RunningStats tau;
        for (const auto& e : bundle.exits()) tau.add(e.tau);
        std::ostringstream csv;
        bundle.write_exits_csv(csv);
        run.write("exits.csv", csv.str());
        summary["n_paths"] = bundle.n_paths();
        summary["n_steps"] = bundle.n_steps();
        summary["dt"] = bundle.dt();
        summary["exit_mode"] = to_string(bundle.exit_mode());
        summary["mean_tau"] = tau.mean();
        summary["stderr_tau"] = tau.stderr_of_mean();
        summary["censored_fraction"] = bundle.censored_fraction();
    } else if (command == "cost") {
        const auto c = run.stage("cost", [&] {
            return cost(p, Policy::constant(rc.cost_policy), rc.x0, sim, rc.verify.regression);
        });
        summary["policy"] = Policy::constant(rc.cost_policy).describe();
        summary["J"] = c.J;
        summary["stderr"] = c.stderr_;
        summary["censored_fraction"] = c.censored_fraction;
    } else if (command == "value") {
        auto candidates = default_candidates(p);
        if (rc.value_feedback && p.d <= 2) {
            const auto field = run.stage("hjb", [&] { return solve_hjb(p, rc.verify.grid); });
            candidates.push_back(extract_policy(field));
        }
        const auto v = run.stage("value", [&] { return estimate_value(p, rc.x0, candidates, sim, rc.verify.regression); });
        json table = json::array();
        for (const auto& c : v.table)
            table.push_back({{"policy", c.policy}, {"J", c.J}, {"stderr", c.stderr_}, {"censored_fraction", c.censored_fraction}});
        summary["u_hat"] = v.u;
        summary["stderr"] = v.stderr_;
        summary["argmin"] = v.argmin;
        summary["candidates"] = table;
    } else if (command == "hjb") {
        if (p.d > 2) throw ConfigError("/problem", "the grid solver supports d <= 2");
        const auto field = run.stage("hjb", [&] { return solve_hjb(p, rc.verify.grid); });
        std::ostringstream csv;
        field.write_csv(csv);
        run.write("value_field.csv", csv.str());
        summary["field"] = field.summary();
        summary["u_x0"] = interpolate(field, rc.x0);
    } else if (command == "verify" || command == "xval") {
        const std::string suite = command == "xval" ? "xval" : o.suite;
        const auto result = run.stage(suite, [&] { return run_suite(rc, suite); });
        json reports = json::array();
        std::size_t failed = 0, passed = 0, skipped = 0;
        for (const auto& r : result.reports) {
            reports.push_back(to_json(r));
            failed += r.failed();
            passed += r.passed();
            skipped += r.status == ReportStatus::Skipped;
            if (r.failed()) std::cerr << "FAILED " << to_json(r).dump() << "\n";
        }
        run.write_json("report.json", reports);
        run.write("report.txt", report_table(result.reports));
        if (!result.chain.empty()) run.write("chain.csv", chain_csv(result.chain));
        if (!result.holder_table.empty()) run.write("holder.csv", holder_csv(result.holder_table));
        summary["suite"] = suite;
        summary["passed"] = passed;
        summary["failed"] = failed;
        summary["skipped"] = skipped;
        std::cout << report_table(result.reports);
        if (failed > 0) code = kCheckFailed;
    }
    run.write_json("summary.json", summary);
    run.finish();
    if (command != "verify" && command != "xval") std::cout << summary.dump(2) << "\n";
    return code;
}

/// Merges every manifest below `dir` into report outputs written in `dir`.
int emit_report(const Options& o) {
    const fs::path dir = o.out;
    if (!fs::is_directory(dir)) throw ConfigError("", "no such run directory: " + dir.string());
    std::vector<fs::path> manifests;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().filename() == "manifest.json") manifests.push_back(e.path());
    std::sort(manifests.begin(), manifests.end());
    if (manifests.empty()) throw ConfigError("", "missing manifest: no manifest.json under " + dir.string());

    json runs = json::array(), duplicates = json::array(), checks = json::array();
    std::map<std::string, std::string> seen;
    std::string s5 = "epsilon,gap12,gap34,stderr12,stderr34\n";
    std::string holder = "run,separation,abs_du\n";
    bool any_s5 = false, any_holder = false;
    for (const auto& m : manifests) {
        const fs::path run_dir = m.parent_path();
        const std::string rel = fs::relative(run_dir, dir).generic_string();
        json manifest;
        try {
            manifest = json::parse(read_file(m));
        } catch (const json::parse_error& e) {
            throw ConfigError("", "unreadable manifest " + m.string() + ": " + e.what());
        }
        const std::string digest = manifest.value("digest", "");
        const bool digest_ok = fs::exists(run_dir / "inputs.json") && sha256_hex(read_file(run_dir / "inputs.json")) == digest;
        if (auto it = seen.find(digest); it != seen.end()) {
            duplicates.push_back({{"run", rel}, {"duplicate_of", it->second}, {"digest", digest}});
            continue;
        }
        seen[digest] = rel;
        json entry{{"run", rel}, {"manifest", manifest}, {"digest_verified", digest_ok}};
        if (fs::exists(run_dir / "summary.json")) entry["summary"] = json::parse(read_file(run_dir / "summary.json"));
        if (fs::exists(run_dir / "report.json"))
            for (const auto& c : json::parse(read_file(run_dir / "report.json"))) checks.push_back(c);
        if (fs::exists(run_dir / "chain.csv")) {
            const std::string t = read_file(run_dir / "chain.csv");
            s5 += t.substr(t.find('\n') + 1);
            any_s5 = true;
        }
        if (fs::exists(run_dir / "holder.csv")) {
            std::istringstream in(read_file(run_dir / "holder.csv"));
            std::string line;
            std::getline(in, line);
            while (std::getline(in, line)) holder += rel + "," + line + "\n";
            any_holder = true;
        }
        runs.push_back(entry);
    }
    json merged{{"runs", runs}, {"duplicates", duplicates}, {"checks", checks}};
    std::ofstream(dir / "merged_report.json") << merged.dump(2) << "\n";
    if (any_s5) std::ofstream(dir / "chain_table.csv") << s5;
    if (any_holder) std::ofstream(dir / "holder_table.csv") << holder;
    std::cout << "merged " << runs.size() << " run(s), " << duplicates.size() << " duplicate(s)\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Exit-time stochastic control: simulation, value estimation and verification"};
    app.set_version_flag("--version", std::string(EXITCTRL_VERSION));
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* sub, bool config) {
        auto* c = sub->add_option("--config", o.config, "Run document (JSON)");
        if (config) c->required()->check(CLI::ExistingFile);
        sub->add_option("--out", o.out, "Output directory");
        sub->add_option("--seed", o.seed, "Master seed");
        sub->add_option("--x0", o.x0, "Start point, comma-separated");
        sub->add_option("--paths", o.paths, "Number of simulated paths");
        sub->add_option("--dt", o.dt, "Time step");
        sub->add_option("--grid", o.grid, "Grid nodes per axis, N or N,N");
    };
    const std::vector<std::pair<std::string, std::string>> commands{
        {"simulate", "Simulate exit paths under a constant policy"},
        {"cost", "Estimate the recursive cost of a constant policy"},
        {"value", "Estimate the value by minimising over candidate policies"},
        {"hjb", "Solve the HJB Dirichlet problem on a grid"},
        {"verify", "Run a verification suite"},
        {"xval", "Cross-validate Monte Carlo against the grid solver"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        add_common(sub, true);
        if (name == "verify") sub->add_option("--suite", o.suite, "Suite: all or a single check family");
    }
    auto* rep = app.add_subcommand("report", "Merge run manifests below --out into report files");
    rep->add_option("--out", o.out, "Run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        if (command == "report") return emit_report(o);
        return run_pipeline(command, o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const PreconditionError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kNumericalError;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumericalError;
    }
}
