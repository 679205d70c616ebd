// SPDX-License-Identifier: Apache-2.0
// End-to-end checks of the installed CLI binary via std::system.
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "wisca/checkpoint.hpp"
#include "wisca/matrix.hpp"
#include "wisca/rng.hpp"

using namespace wisca;

namespace {

struct RunResult {
    int code = -1;
    std::string out, err;
};

std::string slurp_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::uint8_t> slurp_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RunResult run_cli(const std::string& args) {
    static int counter = 0;
    std::string so = "/tmp/wisca_cli_out_" + std::to_string(counter) + ".txt";
    std::string se = "/tmp/wisca_cli_err_" + std::to_string(counter) + ".txt";
    counter++;
    std::string cmd = std::string(WISCA_CLI_EXE) + " " + args + " > " + so + " 2> " + se;
    int rc = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = slurp_text(so);
    r.err = slurp_text(se);
    return r;
}

const std::size_t kDModel = 32, kNq = 8, kNkv = 2, kDk = 4;
const std::string kModel = "/tmp/wisca_cli_model.safetensors";
const std::string kModelOneLayer = "/tmp/wisca_cli_model_1layer.safetensors";
const std::string kLayout = "/tmp/wisca_cli_layout.json";
const std::string kLora = "/tmp/wisca_cli_lora.safetensors";
const std::string kLoraLayout = "/tmp/wisca_cli_lora_layout.json";

void add_transposed(CheckpointFile& cp, const std::string& name, const Matrix& logical) {
    cp.add_tensor(name, Dtype::f64, {logical.cols, logical.rows}, transpose(logical));
}

void build_fixtures() {
    static bool done = false;
    if (done) return;
    done = true;
    Rng rng(2024);
    CheckpointFile cp, one;
    for (std::size_t l = 0; l < 2; l++) {
        std::string base = "model.layers." + std::to_string(l) + ".self_attn.";
        Matrix q = gaussian_fill(kDModel, kNq * kDk, 1.0, rng);
        Matrix k = gaussian_fill(kDModel, kNkv * kDk, 1.0, rng);
        Matrix v = gaussian_fill(kDModel, kNkv * kDk, 1.0, rng);
        Matrix o = gaussian_fill(kNq * kDk, kDModel, 1.0, rng);
        add_transposed(cp, base + "q_proj.weight", q);
        add_transposed(cp, base + "k_proj.weight", k);
        add_transposed(cp, base + "v_proj.weight", v);
        add_transposed(cp, base + "o_proj.weight", o);
        if (l == 0) {
            add_transposed(one, base + "q_proj.weight", q);
            add_transposed(one, base + "k_proj.weight", k);
            add_transposed(one, base + "v_proj.weight", v);
            add_transposed(one, base + "o_proj.weight", o);
        }
    }
    write_checkpoint(cp, kModel);
    write_checkpoint(one, kModelOneLayer);
    std::ofstream(kLayout) << R"({
        "n_q_heads": 8, "n_kv_heads": 2, "head_dim": 4,
        "q": "model.layers.{layer}.self_attn.q_proj.weight",
        "k": "model.layers.{layer}.self_attn.k_proj.weight",
        "v": "model.layers.{layer}.self_attn.v_proj.weight",
        "o": "model.layers.{layer}.self_attn.o_proj.weight",
        "strategies": ["qk-tensor", "vo-tensor"]
    })";

    CheckpointFile adapters;
    add_transposed(adapters, "adapter.a", gaussian_fill(16, 2, 1.0, rng));
    add_transposed(adapters, "adapter.b", Matrix(2, 16));
    write_checkpoint(adapters, kLora);
    std::ofstream(kLoraLayout) << R"({"lora_a": "adapter.a", "lora_b": "adapter.b"})";
}

} // namespace

TEST(Cli, VersionFlag) {
    auto r = run_cli("--version");
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("0.1.0"), std::string::npos);
}

TEST(Cli, ApplyBalancesAndWritesManifest) {
    build_fixtures();
    std::string out = "/tmp/wisca_cli_applied.safetensors";
    auto r = run_cli("apply --in " + kModel + " --out " + out + " --layout " + kLayout);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("applied [qk-tensor vo-tensor] to 2 layer(s)"), std::string::npos)
        << r.out;

    auto man = nlohmann::json::parse(slurp_text(out + ".manifest.json"));
    EXPECT_EQ(man["tool"], "wisca");
    EXPECT_EQ(man["version"], "0.1.0");
    ASSERT_EQ(man["layers"].size(), 2u);
    EXPECT_EQ(man["strategies"], nlohmann::json({"qk-tensor", "vo-tensor"}));
    EXPECT_EQ(man["layers"][0]["plans"][0]["strategy"], "gqa_tensor");
    EXPECT_TRUE(man["layers"][0]["equivalence"]["passed"].get<bool>());
    EXPECT_TRUE(man["equivalence_summary"]["passed"].get<bool>());
    EXPECT_LT(man["equivalence_summary"]["worst_max_rel_dev"].get<double>(), 1e-10);
    EXPECT_DOUBLE_EQ(man["tol"].get<double>(), 1e-10); // all-f64 checkpoint

    CheckpointFile cp = read_checkpoint(out);
    for (int l = 0; l < 2; l++) {
        std::string base = "model.layers." + std::to_string(l) + ".self_attn.";
        double nq = l1_norm(cp.read_matrix(base + "q_proj.weight"));
        double nk = l1_norm(cp.read_matrix(base + "k_proj.weight"));
        double nv = l1_norm(cp.read_matrix(base + "v_proj.weight"));
        double no = l1_norm(cp.read_matrix(base + "o_proj.weight"));
        EXPECT_NEAR(nq, 4.0 * nk, 1e-12 * nq); // g * ||k||
        EXPECT_NEAR(nv, no, 1e-12 * nv);
    }
}

TEST(Cli, ReplayIsByteIdenticalAndIdempotentFactors) {
    build_fixtures();
    std::string out1 = "/tmp/wisca_cli_rep1.safetensors";
    ASSERT_EQ(run_cli("apply --in " + kModel + " --out " + out1 + " --layout " + kLayout).code,
              0);
    std::string out2 = "/tmp/wisca_cli_rep2.safetensors";
    auto r = run_cli("replay --manifest " + out1 + ".manifest.json --out " + out2);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp_bytes(out1), slurp_bytes(out2));

    std::string out3 = "/tmp/wisca_cli_twice.safetensors";
    ASSERT_EQ(run_cli("apply --in " + out1 + " --out " + out3 + " --layout " + kLayout).code,
              0);
    auto man = nlohmann::json::parse(slurp_text(out3 + ".manifest.json"));
    for (const auto& layer : man["layers"])
        for (const auto& plan : layer["plans"])
            for (const auto& [role, f] : plan["tensor_factors"].items())
                EXPECT_NEAR(f.get<double>(), 1.0, 1e-10) << role;
}

TEST(Cli, ApplyNoVerifySkipsBattery) {
    build_fixtures();
    std::string out = "/tmp/wisca_cli_noverify.safetensors";
    auto r = run_cli("apply --in " + kModel + " --out " + out + " --layout " + kLayout +
                     " --no-verify");
    ASSERT_EQ(r.code, 0) << r.err;
    auto man = nlohmann::json::parse(slurp_text(out + ".manifest.json"));
    EXPECT_FALSE(man["verify"].get<bool>());
    EXPECT_FALSE(man["layers"][0].contains("equivalence"));
}

TEST(Cli, VerifyPassFailStructural) {
    build_fixtures();
    std::string out = "/tmp/wisca_cli_v_applied.safetensors";
    ASSERT_EQ(run_cli("apply --in " + kModel + " --out " + out + " --layout " + kLayout).code,
              0);
    auto ok = run_cli("verify --a " + kModel + " --b " + out + " --layout " + kLayout);
    EXPECT_EQ(ok.code, 0) << ok.err;
    EXPECT_NE(ok.out.find("layer 0 attention: battery 32"), std::string::npos) << ok.out;
    EXPECT_NE(ok.out.find("-> pass"), std::string::npos);
    EXPECT_EQ(ok.out.find("FAIL"), std::string::npos);

    CheckpointFile cp = read_checkpoint(out);
    Matrix m = cp.read_matrix("model.layers.0.self_attn.q_proj.weight");
    m.data[0] += 0.05;
    cp.write_matrix("model.layers.0.self_attn.q_proj.weight", m);
    std::string bad = "/tmp/wisca_cli_perturbed.safetensors";
    write_checkpoint(cp, bad);
    auto fail = run_cli("verify --a " + kModel + " --b " + bad + " --layout " + kLayout);
    EXPECT_EQ(fail.code, 3);
    EXPECT_NE(fail.out.find("FAIL"), std::string::npos) << fail.out;

    auto structural =
        run_cli("verify --a " + kModel + " --b " + kModelOneLayer + " --layout " + kLayout);
    EXPECT_EQ(structural.code, 4);
    EXPECT_NE(structural.err.find("structural"), std::string::npos) << structural.err;
}

TEST(Cli, ReportCsvShowsGqaImbalance) {
    build_fixtures();
    auto r = run_cli("report --in " + kModel + " --layout " + kLayout + " --format csv");
    ASSERT_EQ(r.code, 0) << r.err;
    ASSERT_EQ(r.out.rfind("layer,tensor,rows,cols,l1_norm,l2_norm,ratio_l1,implied_factor\n", 0),
              0u)
        << r.out;
    // the naive sqrt(||k||/||q||) factor hovers near 1/sqrt(g) = 0.5 for
    // Gaussian GQA weights, which is exactly why the group-aware scale exists
    std::istringstream in(r.out);
    std::string line;
    bool saw_q = false;
    while (std::getline(in, line)) {
        if (line.rfind("0,q,", 0) == 0) {
            saw_q = true;
            EXPECT_EQ(line.rfind("0,q,32,32,", 0), 0u) << line;
            auto last = line.find_last_of(',');
            double implied = std::strtod(line.c_str() + last + 1, nullptr);
            EXPECT_GT(implied, 0.43);
            EXPECT_LT(implied, 0.57);
        }
        if (line.rfind("0,k,", 0) == 0) EXPECT_EQ(line.rfind("0,k,32,8,", 0), 0u) << line;
    }
    EXPECT_TRUE(saw_q);

    auto table = run_cli("report --in " + kModel + " --layout " + kLayout);
    EXPECT_EQ(table.code, 0);
    EXPECT_NE(table.out.find("implied"), std::string::npos);
}

TEST(Cli, SimulateSinglesMatchFrozenCounts) {
    auto r0 = run_cli("simulate --q0 1 --k0 1");
    EXPECT_EQ(r0.code, 0);
    EXPECT_NE(r0.out.find("converged at iter 0"), std::string::npos) << r0.out;

    auto r3 = run_cli("simulate --q0 3 --k0 0.1");
    EXPECT_NE(r3.out.find("converged at iter 3"), std::string::npos) << r3.out;

    auto r13 = run_cli("simulate --q0 3 --k0 0.1 --wisca-init");
    EXPECT_NE(r13.out.find("converged at iter 13"), std::string::npos) << r13.out;

    std::string csv = "/tmp/wisca_cli_traj.csv", svg = "/tmp/wisca_cli_traj.svg";
    auto art = run_cli("simulate --q0 3 --k0 0.1 --csv " + csv + " --svg " + svg);
    EXPECT_EQ(art.code, 0);
    std::string csv_text = slurp_text(csv);
    EXPECT_EQ(csv_text.rfind("iter,Q,K,loss,gQ,gK\n", 0), 0u);
    EXPECT_NE(slurp_text(svg).find("<svg"), std::string::npos);
}

TEST(Cli, SimulateSweepPrintsPairedStudy) {
    auto r = run_cli("simulate --sweep 200 --seed 7");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("sweep n=200 seed=7:"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("wisca strictly faster"), std::string::npos);
    EXPECT_NE(r.out.find("nonconverged: raw"), std::string::npos);
    EXPECT_NE(r.out.find("median iterations: raw"), std::string::npos);
    EXPECT_NE(r.out.find("median raw >= median wisca:"), std::string::npos);
}

TEST(Cli, NormTheoremTableAndGuards) {
    auto warn = run_cli("norm-theorem --sizes 16x16 --trials 1");
    EXPECT_EQ(warn.code, 0);
    EXPECT_NE(warn.err.find("trials < 100"), std::string::npos) << warn.err;

    std::string args = "norm-theorem --sizes 16x16,32x32 --trials 120 --seed 9";
    auto a = run_cli(args);
    auto b = run_cli(args);
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_EQ(a.out, b.out);
    EXPECT_EQ(a.out.rfind("m,n,trials,mean_ratio_l1,", 0), 0u) << a.out;

    EXPECT_EQ(run_cli("norm-theorem --sizes 16y16 --trials 1").code, 2);
}

TEST(Cli, ExitCodesForBadInputs) {
    build_fixtures();
    EXPECT_EQ(run_cli("apply --in /tmp/wisca_cli_missing.safetensors --out /tmp/x.safetensors"
                      " --layout " +
                      kLayout)
                  .code,
              1);
    std::string badlayout = "/tmp/wisca_cli_badlayout.json";
    { std::ofstream(badlayout) << "{broken"; }
    EXPECT_EQ(run_cli("apply --in " + kModel + " --out /tmp/x.safetensors --layout " +
                      badlayout)
                  .code,
              2);
    auto r = run_cli("apply --in " + kModel + " --out /tmp/x.safetensors --layout " + kLayout +
                     " --strategy bogus");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("unknown strategy"), std::string::npos) << r.err;
}

TEST(Cli, LoraZeroAdapterWarnsButSucceeds) {
    build_fixtures();
    std::string out = "/tmp/wisca_cli_lora_out.safetensors";
    auto r = run_cli("apply --in " + kLora + " --out " + out + " --layout " + kLoraLayout +
                     " --strategy lora");
    ASSERT_EQ(r.code, 0) << r.err;
    auto man = nlohmann::json::parse(slurp_text(out + ".manifest.json"));
    const auto& plan = man["layers"][0]["plans"][0];
    EXPECT_EQ(plan["strategy"], "lora");
    EXPECT_TRUE(plan["identity"].get<bool>());
    ASSERT_TRUE(plan.contains("warnings"));
    EXPECT_NE(plan["warnings"][0].get<std::string>().find("zero-norm"), std::string::npos);
    EXPECT_EQ(slurp_bytes(out), slurp_bytes(kLora)); // identity plan keeps bytes
}
