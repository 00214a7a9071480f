#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "gmt/experiments.hpp"

using namespace gmt;

namespace {

struct Common {
    std::vector<std::string> measures;
    std::string params;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    std::string out;
    std::string format = "json";
    std::string corpus;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--measure,-m", c.measures, "measure file or generator recipe (repeatable)");
    app->add_option("--params", c.params, "parameter overrides: inline JSON or a JSON file");
    app->add_option("--seed", c.seed, "seed for noisy recipes and samplers");
    app->add_option("--workers,-j", c.workers, "reduction threads")->check(CLI::Range(1u, 256u));
    app->add_option("--out,-o", c.out, "output directory");
    app->add_option("--format", c.format, "report format")->check(CLI::IsMember({"json", "csv"}));
    app->add_option("--corpus", c.corpus, "named corpus used when no --measure is given");
}

nlohmann::json parse_params(const std::string& arg) {
    if (arg.empty()) return nlohmann::json::object();
    std::string text = arg;
    if (std::filesystem::is_regular_file(arg)) {
        std::ifstream in(arg);
        std::stringstream ss;
        ss << in.rdbuf();
        text = ss.str();
    }
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("--params is neither a JSON file nor inline JSON: ") + e.what());
    }
}

ExperimentSpec base_spec(const Common& c, const std::string& name, const std::string& experiment) {
    ExperimentSpec s;
    s.name = name;
    s.experiment = experiment;
    s.measures = c.measures;
    s.seed = c.seed;
    s.params = parse_params(c.params);
    params_from_json(s.params);
    s.workers = c.workers;
    s.out_dir = c.out;
    s.format = c.format;
    if (!c.corpus.empty()) s.options["corpus"] = c.corpus;
    return s;
}

std::vector<std::string> require_measures(const Common& c) {
    if (c.measures.empty()) throw Error("at least one --measure is required");
    return c.measures;
}

int finish(const Report& r, const Common& c) {
    if (c.out.empty()) {
        std::cout << r.to_json().dump(1) << '\n';
    } else {
        for (const auto& path : write_report(r, c.out, c.format)) std::cerr << "wrote " << path << '\n';
    }
    for (const auto& [name, ok] : r.flags) std::cerr << (ok ? "PASS " : "FAIL ") << name << '\n';
    for (const auto& [name, v] : r.constants) std::cerr << "     " << name << " = " << v << '\n';
    for (const auto& n : r.notes) std::cerr << "note: " << n << '\n';
    return r.pass() ? 0 : 1;
}

Reduction policy(const Common& c) { return {16, c.workers}; }

// ---------------------------------------------------------------- module subcommands

Report cmd_gen(const Common& c) {
    Report r(base_spec(c, "gen", "gen"));
    bool ok = true;
    int i = 0;
    for (const auto& rec : require_measures(c)) {
        const auto mu = load_or_generate(rec, c.seed);
        double mass = 0.0;
        for (const auto& a : mu.atoms()) mass += a.w;
        ok = ok && mu.size() > 0 && std::isfinite(mass) && mass > 0.0;
        ojson row{{"measure", rec}, {"atoms", mu.size()}, {"mass", mass}, {"scale", mu.scale()}, {"diam", diameter(mu)}};
        if (!c.out.empty()) {
            std::filesystem::create_directories(c.out);
            const auto path = (std::filesystem::path(c.out) / ("measure_" + std::to_string(i) + ".json")).string();
            save_measure(mu, path);
            row["file"] = path;
        } else {
            row["data"] = to_json(mu);
        }
        r.records.push_back(row);
        ++i;
    }
    r.flag("generated", ok);
    return r;
}

Report cmd_perm(const Common& c, const std::vector<std::string>& kernels, double eps) {
    Report r(base_spec(c, "perm", "perm"));
    bool sign = true;
    for (const auto& rec : require_measures(c)) {
        const auto mu = load_or_generate(rec, c.seed);
        const double pinf = perm_measure(KernelParam::infinity(), mu, eps, policy(c)).value;
        for (const auto& ks : kernels) {
            const auto k = KernelParam::parse(ks);
            const auto res = perm_measure(k, mu, eps, policy(c));
            const bool may_be_negative = !k.is_infinity() && k.t() > -2.0 && k.t() < 0.0;
            if (!may_be_negative) sign = sign && res.value >= -1e-10 * std::max(1.0, pinf);
            r.records.push_back({{"measure", rec}, {"kernel", k.label()}, {"eps", eps}, {"p", res.value}, {"triples", res.triples_counted}});
        }
    }
    r.flag("nonnegative_outside_(-2,0)", sign);
    return r;
}

Report cmd_curv(const Common& c, double eps) {
    Report r(base_spec(c, "curv", "curv"));
    bool identity = true, lines = true;
    for (const auto& rec : require_measures(c)) {
        const auto mu = load_or_generate(rec, c.seed);
        const double c2 = curvature_squared(mu, eps, policy(c));
        const double pinf = perm_measure(KernelParam::infinity(), mu, eps, policy(c)).value;
        identity = identity && std::abs(c2 - 4.0 * pinf) <= 1e-10 * std::max(c2, 4.0 * pinf);
        if (line_supported(rec)) lines = lines && c2 == 0.0;
        r.records.push_back({{"measure", rec}, {"eps", eps}, {"c2", c2}, {"p_inf", pinf}});
    }
    r.flag("c2_eq_4_pinf", identity);
    r.flag("lines_zero", lines);
    return r;
}

Report cmd_sio(const Common& c, const std::vector<std::string>& kernels, double eps, int points) {
    Report r(base_spec(c, "sio", "sio"));
    bool finite = true;
    for (const auto& rec : require_measures(c)) {
        const auto mu = load_or_generate(rec, c.seed);
        const double e = eps > 0.0 ? eps : mu.scale();
        for (const auto& ks : kernels) {
            const auto k = KernelParam::parse(ks);
            const double v = l2_norm_T1(k, mu, e, policy(c));
            finite = finite && std::isfinite(v);
            r.records.push_back({{"measure", rec}, {"kernel", k.label()}, {"eps", e}, {"l2_T1_sq", v}});
        }
        const double hi = std::max(mu.scale(), diameter(mu));
        ojson t = to_json(theorem1_ratios(mu, TruncationGrid::geometric(mu.scale(), hi, points), policy(c)));
        finite = finite && std::isfinite(t["ratio_fwd"].get<double>()) && std::isfinite(t["ratio_bwd"].get<double>());
        t["measure"] = rec;
        t["kernel"] = "theorem1";
        r.records.push_back(t);
    }
    r.flag("finite", finite);
    return r;
}

Report cmd_lattice(const Common& c) {
    Report r(base_spec(c, "lattice", "lattice"));
    const Params p = params_from_json(parse_params(c.params));
    bool partition = true;
    for (const auto& rec : require_measures(c)) {
        const auto mu = load_or_generate(rec, c.seed);
        const auto L = Lattice::build(mu, p.C0, p.A0);
        // every level splits the atoms exactly once
        for (int k = 0; k <= L.depth(); ++k) {
            std::vector<int> seen(mu.size(), 0);
            for (const auto& q : L.cubes())
                if (q.level == k)
                    for (auto m : q.members) ++seen[static_cast<std::size_t>(m)];
            for (int v : seen) partition = partition && v == 1;
        }
        ojson row = to_json(L);
        row["measure"] = rec;
        r.records.push_back(row);
    }
    r.flag("levels_partition", partition);
    return r;
}

Report cmd_c1(const Common& c, double theta, std::uint64_t samples) {
    Report r(base_spec(c, "c1-estimate", "c1-estimate"));
    const auto est = estimate_c1(theta, samples, c.seed);
    r.records.push_back({{"theta", theta},
                         {"estimate", est.estimate},
                         {"admissible", est.admissible},
                         {"samples", est.samples},
                         {"witness", {to_json(est.witness[0]), to_json(est.witness[1]), to_json(est.witness[2])}}});
    r.flag("positive", std::isfinite(est.estimate) && est.estimate > 0.0 && est.admissible > 0);
    r.constant("c1_upper", est.estimate);
    return r;
}

/// Corona structure, the curvature identity and the collinear zero on every measure.
Report cmd_verify(const Common& c) {
    auto spec = base_spec(c, "verify", "corona_structure");
    spec.measures = require_measures(c);
    Report r = run(spec);
    r.spec.experiment = "verify";
    Common quiet = c;
    quiet.out.clear();
    const Report curv = cmd_curv(quiet, 0.0);
    for (const auto& f : curv.flags) r.flag(f.first, f.second);
    for (const auto& rec : curv.records) r.records.push_back(rec);
    for (auto& rec : r.records) rec.erase("corona");
    return r;
}

Report run_experiment(const Common& c, const std::string& name, const std::string& experiment, const nlohmann::json& options = {}) {
    auto spec = base_spec(c, name, experiment);
    if (options.is_object())
        for (const auto& [k, v] : options.items()) spec.options[k] = v;
    return run(spec);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gmt: curvature, permutations and corona decompositions of planar measures"};
    app.require_subcommand(1);
    Common c;
    std::vector<std::string> kernels{"inf"};
    double eps = 0.0;
    int points = 16;
    double theta = 0.3;
    std::uint64_t samples = 0;
    std::string witness;
    std::vector<double> Ls;
    int n_max = 4;
    std::vector<std::string> spec_files;

    auto* gen = app.add_subcommand("gen", "generate measures");
    auto* perm = app.add_subcommand("perm", "permutation measure p_t");
    auto* curv = app.add_subcommand("curv", "curvature c^2 and the identity c^2 = 4 p_inf");
    auto* sio = app.add_subcommand("sio", "truncated operator norms and Theorem-1 ratios");
    auto* mv = app.add_subcommand("mv-check", "operator identity remainder across refinements");
    auto* lat = app.add_subcommand("lattice", "multiscale lattice");
    auto* cor = app.add_subcommand("corona", "corona decomposition with per-tree checks");
    auto* gf = app.add_subcommand("graph-fit", "Lipschitz graph on every tree");
    auto* ver = app.add_subcommand("verify", "all structural invariants on the given measures");
    auto* scan = app.add_subcommand("scan-sign", "minimum of p_t over random triples");
    auto* c1 = app.add_subcommand("c1-estimate", "empirical p_0/p_inf infimum on vertically far triples");
    auto* t0 = app.add_subcommand("t0-bracket", "empirical brackets for the permutation comparison");
    auto* bil = app.add_subcommand("bilip", "curvature under bi-Lipschitz maps");
    auto* cg = app.add_subcommand("cantor-growth", "p_inf of the four-corner Cantor levels");
    auto* rep = app.add_subcommand("report", "run experiment spec files");

    for (auto* s : {gen, perm, curv, sio, mv, lat, cor, gf, ver, scan, c1, t0, bil, cg, rep}) add_common(s, c);
    for (auto* s : {perm, sio, scan}) s->add_option("--kernel,-k", kernels, "t value or inf (repeatable)");
    for (auto* s : {perm, curv, sio, mv}) s->add_option("--eps", eps, "truncation length (0: none; sio/mv default to the scale/0.05)");
    sio->add_option("--points", points, "truncation grid size")->check(CLI::Range(2, 1000));
    c1->add_option("--theta", theta, "vertical-far angle");
    for (auto* s : {scan, c1}) s->add_option("--samples", samples, "random triples");
    gf->add_option("--witness-params", witness, "second parameter set (JSON)");
    bil->add_option("--L", Ls, "bi-Lipschitz constants");
    cg->add_option("--n-max", n_max, "deepest level")->check(CLI::Range(1, 5));
    rep->add_option("specs", spec_files, "experiment spec files")->required();

    CLI11_PARSE(app, argc, argv);
    try {
        if (*gen) return finish(cmd_gen(c), c);
        if (*perm) return finish(cmd_perm(c, kernels, eps), c);
        if (*curv) return finish(cmd_curv(c, eps), c);
        if (*sio) return finish(cmd_sio(c, kernels, eps, points), c);
        if (*mv) {
            auto spec = base_spec(c, "mv-check", "mv_identity");
            if (!c.measures.empty()) spec.options["families"] = nlohmann::json::array({nlohmann::json(c.measures)});
            if (eps > 0.0) spec.grid.eps = eps;
            return finish(run(spec), c);
        }
        if (*lat) return finish(cmd_lattice(c), c);
        if (*cor) {
            require_measures(c);
            return finish(run_experiment(c, "corona", "corona"), c);
        }
        if (*gf) {
            nlohmann::json opt = nlohmann::json::object();
            if (!witness.empty()) opt["witness_params"] = parse_params(witness);
            return finish(run_experiment(c, "graph-fit", "lipschitz_graph", opt), c);
        }
        if (*ver) return finish(cmd_verify(c), c);
        if (*scan) {
            auto spec = base_spec(c, "scan-sign", "sign_dichotomy");
            if (kernels != std::vector<std::string>{"inf"}) spec.kernels = kernels;
            spec.samples = samples;
            return finish(run(spec), c);
        }
        if (*c1) return finish(cmd_c1(c, theta, samples ? samples : 200000), c);
        if (*t0) return finish(run_experiment(c, "t0-bracket", "t0_bracket"), c);
        if (*bil) {
            nlohmann::json opt = nlohmann::json::object();
            if (!Ls.empty()) opt["L"] = Ls;
            return finish(run_experiment(c, "bilip", "bilipschitz", opt), c);
        }
        if (*cg) return finish(run_experiment(c, "cantor-growth", "cantor_growth", {{"n_max", n_max}}), c);
        if (*rep) {
            int status = 0;
            for (const auto& path : spec_files) {
                auto spec = load_spec(path);
                if (c.workers > 1) spec.workers = c.workers;
                Common local = c;
                if (local.out.empty()) local.out = spec.out_dir.empty() ? "reports" : spec.out_dir;
                if (c.format == "json" && spec.format == "csv") local.format = "csv";
                std::cerr << "== " << spec.name << '\n';
                status = std::max(status, finish(run(spec), local));
            }
            return status;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
