// SPDX-License-Identifier: Apache-2.0
// wisca command-line tool: apply / verify / report / simulate / norm-theorem / replay.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "wisca/wisca.hpp"

namespace {

constexpr const char* kToolVersion = "0.1.0";
constexpr std::size_t kBatteryRows = 4; // sequence length of probe inputs

int env_workers() {
    const char* w = std::getenv("WISCA_WORKERS");
    if (!w || !*w) return 1;
    int v = std::atoi(w);
    return v >= 1 ? v : 1;
}

// canonical strategy order: qk before vo before lora; composition within a
// layer is order-stable no matter how the flags were given
const std::vector<std::string> kStrategyOrder = {
    "qk-tensor", "qk-channel", "vo-tensor", "vo-channel", "lora"};

std::vector<std::string> canonical_strategies(std::vector<std::string> in) {
    std::vector<std::string> out;
    for (const std::string& s : kStrategyOrder)
        for (const std::string& g : in)
            if (g == s && std::find(out.begin(), out.end(), s) == out.end())
                out.push_back(s);
    for (const std::string& g : in)
        if (std::find(kStrategyOrder.begin(), kStrategyOrder.end(), g) == kStrategyOrder.end())
            throw wisca::ParseError("unknown strategy '" + g + "'");
    return out;
}

double default_tol_for(const wisca::CheckpointFile& cp) {
    // loosen to the narrowest dtype present among floating tensors
    double tol = 1e-10;
    for (const auto& [name, t] : cp.tensors) {
        switch (t.dtype) {
            case wisca::Dtype::f64: break;
            case wisca::Dtype::f32: tol = std::max(tol, 1e-6); break;
            case wisca::Dtype::f16: tol = std::max(tol, 1e-2); break;
            case wisca::Dtype::bf16: tol = std::max(tol, 5e-2); break;
        }
    }
    return tol;
}

wisca::Matrix attn_forward(const wisca::AttentionWeights& w, const wisca::AttentionLayout& lo,
                           const wisca::Matrix& x) {
    return wisca::gqa_forward(x, w, lo);
}

struct LayerOutcome {
    std::size_t layer = 0;
    std::vector<wisca::ScalePlan> plans;
    std::set<wisca::Role> touched;
    bool verified = false;
    wisca::EquivalenceReport report;
};

nlohmann::ordered_json plan_to_json(const wisca::ScalePlan& p) {
    nlohmann::ordered_json j;
    j["strategy"] = wisca::strategy_name(p.strategy);
    nlohmann::ordered_json fac = nlohmann::ordered_json::object();
    for (const auto& [role, f] : p.tensor_factors) fac[wisca::role_name(role)] = f;
    j["tensor_factors"] = fac;
    if (!p.channel_factors.empty()) {
        nlohmann::ordered_json ch = nlohmann::ordered_json::object();
        for (const auto& [role, v] : p.channel_factors) {
            double lo = v.empty() ? 1.0 : *std::min_element(v.begin(), v.end());
            double hi = v.empty() ? 1.0 : *std::max_element(v.begin(), v.end());
            ch[wisca::role_name(role)] = {{"count", v.size()}, {"min", lo}, {"max", hi}};
        }
        j["channel_factors"] = ch;
    }
    if (!p.warnings.empty()) j["warnings"] = p.warnings;
    j["identity"] = p.is_identity();
    return j;
}

// shared by apply and replay so a manifest re-run takes the exact same path
int run_apply(const std::string& in_path, const std::string& out_path,
              const std::string& layout_path, std::vector<std::string> strategies,
              bool verify, double tol_flag, bool tol_set, std::uint64_t seed,
              const std::string& manifest_path) {
    wisca::CheckpointFile cp = wisca::read_checkpoint(in_path);
    wisca::LayoutDescriptor desc = wisca::LayoutDescriptor::load(layout_path);
    if (strategies.empty()) strategies = desc.strategies;
    strategies = canonical_strategies(strategies);
    if (strategies.empty())
        throw wisca::ParseError("no strategy given (flag --strategy or descriptor defaults)");
    const double tol = tol_set ? tol_flag : default_tol_for(cp);

    std::vector<wisca::ResolvedLayer> layers = wisca::resolve_layout(cp, desc);
    std::vector<LayerOutcome> outcomes;
    bool all_ok = true;

    for (wisca::ResolvedLayer& rl : layers) {
        LayerOutcome oc;
        oc.layer = rl.layer;
        std::optional<wisca::AttentionWeights> before;
        std::optional<wisca::LoraPair> lora_before;
        if (rl.weights) before = *rl.weights;
        if (rl.lora) lora_before = *rl.lora;

        for (const std::string& s : strategies) {
            if (s == "lora") {
                if (!rl.lora) continue;
                wisca::ScalePlan p = wisca::lora_scale(*rl.lora).plan;
                *rl.lora = wisca::apply_plan(*rl.lora, p);
                oc.plans.push_back(p);
                oc.touched.insert(wisca::Role::lora_a);
                oc.touched.insert(wisca::Role::lora_b);
                continue;
            }
            if (!rl.weights) continue;
            wisca::AttentionWeights& w = *rl.weights;
            const wisca::AttentionLayout& lo = *rl.layout;
            wisca::ScalePlan p;
            if (s == "qk-tensor")
                p = wisca::gqa_tensor_scale(w.w_q, w.w_k, lo.g()).plan;
            else if (s == "qk-channel")
                p = wisca::qk_channel_scale(w.w_q, w.w_k, lo).plan;
            else if (s == "vo-tensor")
                p = wisca::vo_tensor_scale(w.w_v, w.w_o).plan;
            else // vo-channel
                p = wisca::vo_channel_scale(w.w_v, w.w_o, lo).plan;
            w = wisca::apply_plan(w, p);
            oc.plans.push_back(p);
            if (s[0] == 'q') {
                oc.touched.insert(wisca::Role::q);
                oc.touched.insert(wisca::Role::k);
            } else {
                oc.touched.insert(wisca::Role::v);
                oc.touched.insert(wisca::Role::o);
            }
        }

        if (verify && before) {
            const wisca::AttentionLayout lo = *rl.layout;
            const wisca::AttentionWeights wa = *before;
            const wisca::AttentionWeights wb = *rl.weights;
            auto battery = wisca::make_battery(32, kBatteryRows, lo.d_model,
                                               seed + 0x9e37 * (rl.layer + 1));
            oc.report = wisca::verify_equivalence(
                [&](const wisca::Matrix& x) { return attn_forward(wa, lo, x); },
                [&](const wisca::Matrix& x) { return attn_forward(wb, lo, x); }, battery, tol);
            oc.verified = true;
            if (!oc.report.passed) all_ok = false;
        }
        if (verify && lora_before && rl.lora) {
            const wisca::LoraPair pa = *lora_before;
            const wisca::LoraPair pb = *rl.lora;
            auto battery = wisca::make_battery(32, kBatteryRows, pa.a.rows,
                                               seed + 0x51ed * (rl.layer + 1));
            wisca::EquivalenceReport r = wisca::verify_equivalence(
                [&](const wisca::Matrix& x) { return matmul(x, matmul(pa.a, pa.b)); },
                [&](const wisca::Matrix& x) { return matmul(x, matmul(pb.a, pb.b)); }, battery,
                tol);
            if (oc.verified)
                oc.report.max_rel_dev = std::max(oc.report.max_rel_dev, r.max_rel_dev);
            else
                oc.report = r;
            oc.verified = true;
            oc.report.passed = oc.report.max_rel_dev <= tol;
            if (!oc.report.passed) all_ok = false;
        }
        outcomes.push_back(std::move(oc));
    }

    if (!all_ok) {
        for (const LayerOutcome& oc : outcomes)
            if (oc.verified && !oc.report.passed)
                std::cerr << "layer " << oc.layer << ": equivalence FAILED, max rel dev "
                          << oc.report.max_rel_dev << " > tol " << tol << "\n";
        std::cerr << "no output written\n";
        return 3;
    }

    for (const wisca::ResolvedLayer& rl : layers) {
        const LayerOutcome& oc = outcomes[&rl - layers.data()];
        wisca::store_layer(cp, desc, rl, oc.touched);
    }
    wisca::write_checkpoint(cp, out_path);

    nlohmann::ordered_json man;
    man["tool"] = "wisca";
    man["version"] = kToolVersion;
    man["command"] = "apply";
    man["input"] = in_path;
    man["output"] = out_path;
    man["layout"] = layout_path;
    man["strategies"] = strategies;
    man["seed"] = seed;
    man["tol"] = tol;
    man["verify"] = verify;
    nlohmann::ordered_json jl = nlohmann::ordered_json::array();
    double worst = 0.0;
    for (const LayerOutcome& oc : outcomes) {
        nlohmann::ordered_json j;
        j["layer"] = oc.layer;
        nlohmann::ordered_json plans = nlohmann::ordered_json::array();
        for (const auto& p : oc.plans) plans.push_back(plan_to_json(p));
        j["plans"] = plans;
        if (oc.verified) {
            j["equivalence"] = {{"battery", oc.report.battery_size},
                                {"max_rel_dev", oc.report.max_rel_dev},
                                {"passed", oc.report.passed}};
            worst = std::max(worst, oc.report.max_rel_dev);
        }
        jl.push_back(j);
    }
    man["layers"] = jl;
    man["equivalence_summary"] = {{"worst_max_rel_dev", worst}, {"tol", tol}, {"passed", true}};
    std::string man_path = manifest_path.empty() ? out_path + ".manifest.json" : manifest_path;
    std::ofstream mo(man_path);
    if (!mo) throw wisca::IoError("cannot write manifest '" + man_path + "'");
    mo << man.dump(2) << "\n";

    std::cout << "applied [";
    for (std::size_t i = 0; i < strategies.size(); i++)
        std::cout << (i ? " " : "") << strategies[i];
    std::cout << "] to " << layers.size() << " layer(s); worst max rel dev " << worst
              << "; wrote " << out_path << "\n";
    return 0;
}

int cmd_verify(const std::string& a_path, const std::string& b_path,
               const std::string& layout_path, std::size_t battery_n, double tol, bool tol_set,
               std::uint64_t seed) {
    wisca::CheckpointFile ca = wisca::read_checkpoint(a_path);
    wisca::CheckpointFile cb = wisca::read_checkpoint(b_path);
    wisca::LayoutDescriptor desc = wisca::LayoutDescriptor::load(layout_path);
    const double use_tol = tol_set ? tol : std::max(default_tol_for(ca), default_tol_for(cb));
    auto la = wisca::resolve_layout(ca, desc);
    auto lb = wisca::resolve_layout(cb, desc);
    if (la.size() != lb.size())
        throw wisca::StructuralError("layer count mismatch: " + std::to_string(la.size()) +
                                     " vs " + std::to_string(lb.size()));
    bool all_ok = true;
    for (std::size_t i = 0; i < la.size(); i++) {
        try {
            if (la[i].weights) {
                if (!lb[i].weights) throw wisca::StructuralError("layer role sets differ");
                auto battery = wisca::make_battery(battery_n, kBatteryRows,
                                                   la[i].layout->d_model, seed + i);
                wisca::EquivalenceReport r = wisca::verify_equivalence(
                    [&](const wisca::Matrix& x) {
                        return attn_forward(*la[i].weights, *la[i].layout, x);
                    },
                    [&](const wisca::Matrix& x) {
                        return attn_forward(*lb[i].weights, *lb[i].layout, x);
                    },
                    battery, use_tol);
                std::printf("layer %zu attention: battery %zu, max abs dev %.3e, max rel dev %.3e -> %s\n",
                            la[i].layer, r.battery_size, r.max_abs_dev, r.max_rel_dev,
                            r.passed ? "pass" : "FAIL");
                if (!r.passed) all_ok = false;
            }
            if (la[i].lora) {
                if (!lb[i].lora) throw wisca::StructuralError("layer role sets differ");
                auto battery =
                    wisca::make_battery(battery_n, kBatteryRows, la[i].lora->a.rows, seed + 77 + i);
                wisca::EquivalenceReport r = wisca::verify_equivalence(
                    [&](const wisca::Matrix& x) {
                        return matmul(x, matmul(la[i].lora->a, la[i].lora->b));
                    },
                    [&](const wisca::Matrix& x) {
                        return matmul(x, matmul(lb[i].lora->a, lb[i].lora->b));
                    },
                    battery, use_tol);
                std::printf("layer %zu lora: battery %zu, max abs dev %.3e, max rel dev %.3e -> %s\n",
                            la[i].layer, r.battery_size, r.max_abs_dev, r.max_rel_dev,
                            r.passed ? "pass" : "FAIL");
                if (!r.passed) all_ok = false;
            }
        } catch (const wisca::ShapeError& e) {
            throw wisca::StructuralError(e.what()); // differing geometry, not a numeric gap
        }
    }
    return all_ok ? 0 : 3;
}

int cmd_report(const std::string& in_path, const std::string& layout_path,
               const std::string& format) {
    wisca::CheckpointFile cp = wisca::read_checkpoint(in_path);
    wisca::LayoutDescriptor desc = wisca::LayoutDescriptor::load(layout_path);
    auto layers = wisca::resolve_layout(cp, desc);
    struct Row {
        std::size_t layer;
        std::string tensor;
        std::size_t rows, cols;
        double l1, l2;
        double ratio = 0.0, implied = 0.0;
        bool has_ratio = false;
    };
    std::vector<Row> rows;
    for (const auto& rl : layers) {
        auto push = [&](const char* name, const wisca::Matrix& m) -> Row& {
            rows.push_back({rl.layer, name, m.rows, m.cols, wisca::l1_norm(m),
                            wisca::l2_norm(m)});
            return rows.back();
        };
        if (rl.weights) {
            const auto& w = *rl.weights;
            Row& q = push("q", w.w_q);
            q.ratio = wisca::l1_norm(w.w_q) / wisca::l1_norm(w.w_k);
            q.implied = std::sqrt(1.0 / q.ratio);
            q.has_ratio = true;
            push("k", w.w_k);
            Row& v = push("v", w.w_v);
            v.ratio = wisca::l1_norm(w.w_v) / wisca::l1_norm(w.w_o);
            v.implied = std::sqrt(1.0 / v.ratio);
            v.has_ratio = true;
            push("o", w.w_o);
        }
        if (rl.lora) {
            Row& a = push("lora_a", rl.lora->a);
            a.ratio = wisca::l1_norm(rl.lora->a) / wisca::l1_norm(rl.lora->b);
            a.implied = std::sqrt(1.0 / a.ratio);
            a.has_ratio = true;
            push("lora_b", rl.lora->b);
        }
    }
    if (format == "csv") {
        std::printf("layer,tensor,rows,cols,l1_norm,l2_norm,ratio_l1,implied_factor\n");
        for (const Row& r : rows) {
            std::printf("%zu,%s,%zu,%zu,%.17g,%.17g,", r.layer, r.tensor.c_str(), r.rows,
                        r.cols, r.l1, r.l2);
            if (r.has_ratio)
                std::printf("%.17g,%.17g\n", r.ratio, r.implied);
            else
                std::printf(",\n");
        }
    } else {
        std::printf("%5s %-8s %7s %7s %14s %14s %10s %10s\n", "layer", "tensor", "rows",
                    "cols", "l1_norm", "l2_norm", "ratio_l1", "implied");
        for (const Row& r : rows) {
            std::printf("%5zu %-8s %7zu %7zu %14.6g %14.6g", r.layer, r.tensor.c_str(),
                        r.rows, r.cols, r.l1, r.l2);
            if (r.has_ratio)
                std::printf(" %10.4g %10.4g\n", r.ratio, r.implied);
            else
                std::printf(" %10s %10s\n", "-", "-");
        }
    }
    return 0;
}

int cmd_simulate(double q0, double k0, double c, double eta, double beta, double eps,
                 std::size_t max_iters, bool wisca_init, const std::string& csv,
                 const std::string& svg, std::size_t sweep_n, std::uint64_t seed) {
    wisca::SimConfig cfg;
    cfg.c = c;
    cfg.eta = eta;
    cfg.beta = beta;
    cfg.eps = eps;
    cfg.max_iters = max_iters;
    cfg.validate();

    if (sweep_n > 0) {
        wisca::Rng rng(seed);
        const double sentinel = 1e9;
        std::vector<double> raw_iters, wis_iters;
        std::size_t strict = 0, le = 0, div_raw = 0, div_wis = 0;
        while (raw_iters.size() < sweep_n) {
            double q = rng.u01() * 6.0 - 3.0;
            double k = rng.u01() * 6.0 - 3.0;
            double p = q * k - cfg.c;
            if (std::abs(p) < 0.3 || std::abs(p) > 3.0) continue;
            wisca::Trajectory tr = wisca::sgd_momentum_run(q, k, cfg, false);
            wisca::Trajectory tw = wisca::sgd_momentum_run(q, k, cfg, true);
            double r = tr.iters_to_converge ? double(*tr.iters_to_converge) : sentinel;
            double w = tw.iters_to_converge ? double(*tw.iters_to_converge) : sentinel;
            if (!tr.iters_to_converge) div_raw++;
            if (!tw.iters_to_converge) div_wis++;
            raw_iters.push_back(r);
            wis_iters.push_back(w);
            if (w < r) strict++;
            if (w <= r) le++;
        }
        auto median = [](std::vector<double> v) {
            std::sort(v.begin(), v.end());
            std::size_t n = v.size();
            return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
        };
        double mr = median(raw_iters), mw = median(wis_iters);
        std::printf("sweep n=%zu seed=%llu: wisca strictly faster %.4f, faster-or-equal %.4f\n",
                    sweep_n, static_cast<unsigned long long>(seed),
                    double(strict) / double(sweep_n), double(le) / double(sweep_n));
        std::printf("nonconverged: raw %zu, wisca %zu\n", div_raw, div_wis);
        std::printf("median iterations: raw %g, wisca %g\n", mr, mw);
        std::printf("median raw >= median wisca: %s\n", mr >= mw ? "yes" : "no");
        return 0;
    }

    wisca::Trajectory t = wisca::sgd_momentum_run(q0, k0, cfg, wisca_init);
    if (!csv.empty()) {
        std::ofstream out(csv);
        if (!out) throw wisca::IoError("cannot write '" + csv + "'");
        out << wisca::trajectory_csv(t);
    }
    if (!svg.empty()) {
        std::ofstream out(svg);
        if (!out) throw wisca::IoError("cannot write '" + svg + "'");
        out << wisca::trajectory_svg(t, cfg);
    }
    if (t.converged)
        std::printf("converged at iter %zu (Q=%.6g K=%.6g loss=%.6g)\n",
                    *t.iters_to_converge, t.steps.back().q, t.steps.back().k,
                    t.steps.back().loss);
    else
        std::printf("did not converge within %zu iterations%s\n", max_iters,
                    t.diverged ? " (diverged)" : "");
    return 0;
}

int cmd_norm_theorem(const std::string& sizes_flag, std::size_t trials, std::uint64_t seed,
                     int workers) {
    std::vector<std::pair<std::size_t, std::size_t>> sizes;
    std::string tok;
    std::istringstream ss(sizes_flag);
    while (std::getline(ss, tok, ',')) {
        auto x = tok.find('x');
        if (x == std::string::npos)
            throw wisca::ParseError("bad --sizes entry '" + tok + "' (want MxN)");
        sizes.push_back({std::stoull(tok.substr(0, x)), std::stoull(tok.substr(x + 1))});
    }
    wisca::Rng rng(seed);
    wisca::ConvergenceTable table =
        wisca::convergence_experiment(sizes, trials, 1.0, rng, workers);
    std::fputs(wisca::convergence_csv(table).c_str(), stdout);
    if (trials < 100) {
        std::fprintf(stderr, "warning: %zu trials < 100, concentration assertions skipped\n",
                     trials);
        return 0;
    }
    bool ok = true;
    double prev_std = -1.0;
    std::size_t prev_mn = 0;
    for (const auto& row : table.rows) {
        const std::size_t mn = row.m * row.n;
        if (mn >= 4096 && (row.mean_ratio_l1 < 0.99 || row.mean_ratio_l1 > 1.01)) {
            std::fprintf(stderr, "assertion failed: mean ratio %.6f outside [0.99,1.01] at %zux%zu\n",
                         row.mean_ratio_l1, row.m, row.n);
            ok = false;
        }
        if (prev_std >= 0.0 && mn > prev_mn && row.std_ratio_l1 >= prev_std) {
            std::fprintf(stderr, "assertion failed: std not shrinking at %zux%zu\n", row.m,
                         row.n);
            ok = false;
        }
        prev_std = row.std_ratio_l1;
        prev_mn = mn;
    }
    return ok ? 0 : 3;
}

int cmd_replay(const std::string& manifest_path, const std::string& out_override) {
    std::ifstream in(manifest_path);
    if (!in) throw wisca::IoError("cannot open manifest '" + manifest_path + "'");
    nlohmann::json man;
    try {
        in >> man;
    } catch (const nlohmann::json::exception& e) {
        throw wisca::ParseError("'" + manifest_path + "': bad manifest JSON: " + e.what());
    }
    for (const char* key : {"input", "output", "layout", "strategies", "seed", "tol", "verify"})
        if (!man.contains(key))
            throw wisca::ParseError("manifest missing field '" + std::string(key) + "'");
    std::string out = out_override.empty() ? man["output"].get<std::string>() : out_override;
    return run_apply(man["input"].get<std::string>(), out, man["layout"].get<std::string>(),
                     man["strategies"].get<std::vector<std::string>>(),
                     man["verify"].get<bool>(), man["tol"].get<double>(), true,
                     man["seed"].get<std::uint64_t>(), out + ".manifest.json");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"WISCA weight rescaling for attention checkpoints"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);

    // apply
    std::string a_in, a_out, a_layout, a_manifest;
    std::vector<std::string> a_strategies;
    bool a_verify = true;
    double a_tol = 0.0;
    std::uint64_t a_seed = 42;
    CLI::App* apply = app.add_subcommand("apply", "rescale weights, preserving the function");
    apply->add_option("--in", a_in, "input checkpoint")->required();
    apply->add_option("--out", a_out, "output checkpoint")->required();
    apply->add_option("--layout", a_layout, "layout descriptor JSON")->required();
    apply->add_option("--strategy", a_strategies,
                      "qk-tensor|qk-channel|vo-tensor|vo-channel|lora (repeatable)");
    apply->add_flag("--verify,!--no-verify", a_verify, "equivalence battery per layer (default on)");
    CLI::Option* a_tol_opt = apply->add_option("--tol", a_tol, "max relative deviation");
    apply->add_option("--seed", a_seed, "battery seed");
    apply->add_option("--manifest", a_manifest, "manifest path (default <out>.manifest.json)");

    // verify
    std::string v_a, v_b, v_layout;
    std::size_t v_battery = 32;
    double v_tol = 0.0;
    std::uint64_t v_seed = 42;
    CLI::App* verify = app.add_subcommand("verify", "check functional equivalence of two checkpoints");
    verify->add_option("--a", v_a, "first checkpoint")->required();
    verify->add_option("--b", v_b, "second checkpoint")->required();
    verify->add_option("--layout", v_layout, "layout descriptor JSON")->required();
    verify->add_option("--battery", v_battery, "number of probe inputs");
    CLI::Option* v_tol_opt = verify->add_option("--tol", v_tol, "max relative deviation");
    verify->add_option("--seed", v_seed, "battery seed");

    // report
    std::string r_in, r_layout, r_format = "table";
    CLI::App* report = app.add_subcommand("report", "per-layer norms and imbalance diagnostics");
    report->add_option("--in", r_in, "checkpoint")->required();
    report->add_option("--layout", r_layout, "layout descriptor JSON")->required();
    report->add_option("--format", r_format, "csv|table")
        ->check(CLI::IsMember({"csv", "table"}));

    // simulate
    double s_q0 = 1.0, s_k0 = 1.0, s_c = 1.0, s_eta = 0.01, s_beta = 0.9, s_eps = 1e-2;
    std::size_t s_max = 10000, s_sweep = 0;
    bool s_wisca = false;
    std::string s_csv, s_svg;
    std::uint64_t s_seed = 42;
    CLI::App* simulate = app.add_subcommand("simulate", "toy rank-1 loss landscape under SGD momentum");
    simulate->add_option("--q0", s_q0, "initial Q");
    simulate->add_option("--k0", s_k0, "initial K");
    simulate->add_option("--c", s_c, "target product C");
    simulate->add_option("--eta", s_eta, "learning rate");
    simulate->add_option("--beta", s_beta, "momentum");
    simulate->add_option("--eps", s_eps, "loss threshold");
    simulate->add_option("--max-iters", s_max, "iteration cap");
    simulate->add_flag("--wisca-init", s_wisca, "project the start onto |Q|=|K|");
    simulate->add_option("--csv", s_csv, "write trajectory CSV");
    simulate->add_option("--svg", s_svg, "write trajectory SVG");
    simulate->add_option("--sweep", s_sweep, "paired random-init study of n samples");
    simulate->add_option("--seed", s_seed, "sweep seed");

    // norm-theorem
    std::string n_sizes = "16x16,64x64,256x256,1024x1024";
    std::size_t n_trials = 1000;
    std::uint64_t n_seed = 42;
    int n_workers = env_workers();
    CLI::App* norm = app.add_subcommand("norm-theorem", "Gaussian norm-ratio convergence table");
    norm->add_option("--sizes", n_sizes, "comma list of MxN");
    norm->add_option("--trials", n_trials, "trials per size");
    norm->add_option("--seed", n_seed, "rng seed");
    norm->add_option("--workers", n_workers, "worker threads (default WISCA_WORKERS or 1)");

    // replay
    std::string p_manifest, p_out;
    CLI::App* replay = app.add_subcommand("replay", "re-run an apply manifest bit-for-bit");
    replay->add_option("--manifest", p_manifest, "manifest JSON from a previous apply")->required();
    replay->add_option("--out", p_out, "override output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*apply)
            return run_apply(a_in, a_out, a_layout, a_strategies, a_verify, a_tol,
                             a_tol_opt->count() > 0, a_seed, a_manifest);
        if (*verify)
            return cmd_verify(v_a, v_b, v_layout, v_battery, v_tol, v_tol_opt->count() > 0,
                              v_seed);
        if (*report) return cmd_report(r_in, r_layout, r_format);
        if (*simulate)
            return cmd_simulate(s_q0, s_k0, s_c, s_eta, s_beta, s_eps, s_max, s_wisca, s_csv,
                                s_svg, s_sweep, s_seed);
        if (*norm) return cmd_norm_theorem(n_sizes, n_trials, n_seed, n_workers);
        if (*replay) return cmd_replay(p_manifest, p_out);
    } catch (const wisca::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 1;
    } catch (const wisca::StructuralError& e) {
        std::cerr << "structural: " << e.what() << "\n";
        return 4;
    } catch (const wisca::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const wisca::ResolveError& e) {
        std::cerr << "resolve error: " << e.what() << "\n";
        return 2;
    } catch (const wisca::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
