#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code;
    std::string output;
};

RunResult run_cli(const std::string& args) {
    fs::path out = fs::temp_directory_path() / "pmtl_cli_out.txt";
    std::string cmd = std::string(PMTL_CLI_PATH) + " " + args + " > " + out.string() + " 2>&1";
    int rc = std::system(cmd.c_str());
    std::ifstream in(out);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return {WEXITSTATUS(rc), text};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Shared tiny dataset + config for the train/eval pipeline tests.
struct Fixture {
    fs::path dir;
    fs::path data;
    fs::path cfg_path;

    Fixture() {
        dir = fs::temp_directory_path() / "pmtl_cli_fixture";
        fs::remove_all(dir);
        fs::create_directories(dir);
        data = dir / "data";
        RunResult synth = run_cli("synth --kinds cube,cylinder --per-class 10 --points 48 --seed 3 --out " +
                                  data.string());
        REQUIRE(synth.exit_code == 0);

        nlohmann::json cfg = {
            {"seed", 5},
            {"out_dir", (dir / "run").string()},
            {"dataset", {{"root", data.string()}, {"manifest", "manifest.tsv"}}},
            {"model",
             {{"m", 48},
              {"k_list", {4, 6}},
              {"edge_width", 4},
              {"point_conv_width", 4},
              {"stack_widths", {8, 12}},
              {"d_shape", 8},
              {"d_point", 20},
              {"k_ub", 6},
              {"classifier_widths", {8}},
              {"decoder_widths", {8}}}},
            {"train", {{"batch_size", 4}, {"epochs", 2}}},
            {"eval", {{"probe_iters", 60}}},
        };
        cfg_path = dir / "config.json";
        std::ofstream(cfg_path) << cfg.dump(2);
    }
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

}  // namespace

TEST_CASE("synth writes the 70/10/20 split and is deterministic") {
    fs::path dir = fs::temp_directory_path() / "pmtl_cli_synth";
    fs::remove_all(dir);
    RunResult r1 = run_cli("synth --kinds sphere,torus --per-class 10 --points 32 --seed 7 --out " +
                           (dir / "a").string());
    CHECK(r1.exit_code == 0);
    std::ifstream manifest(dir / "a" / "manifest.tsv");
    int train = 0, val = 0, test = 0, total = 0;
    std::string line;
    while (std::getline(manifest, line)) {
        ++total;
        if (line.find("\ttrain") != std::string::npos) ++train;
        if (line.find("\tval") != std::string::npos) ++val;
        if (line.find("\ttest") != std::string::npos) ++test;
    }
    CHECK(total == 20);
    CHECK(train == 14);
    CHECK(val == 2);
    CHECK(test == 4);

    RunResult r2 = run_cli("synth --kinds sphere,torus --per-class 10 --points 32 --seed 7 --out " +
                           (dir / "b").string());
    CHECK(r2.exit_code == 0);
    CHECK(slurp(dir / "a" / "manifest.tsv") == slurp(dir / "b" / "manifest.tsv"));
    CHECK(slurp(dir / "a" / "sphere_0000.txt") == slurp(dir / "b" / "sphere_0000.txt"));

    RunResult bad = run_cli("synth --kinds '' --out " + (dir / "c").string());
    CHECK(bad.exit_code == 1);
    fs::remove_all(dir);
}

TEST_CASE("print-config emits resolved JSON that reproduces itself") {
    Fixture& f = fixture();
    RunResult r = run_cli("train --config " + f.cfg_path.string() + " --print-config");
    REQUIRE(r.exit_code == 0);
    nlohmann::json parsed = nlohmann::json::parse(r.output);
    CHECK(parsed["model"]["m"] == 48);
    CHECK(parsed["train"]["lr"] == 0.003);  // default filled in

    fs::path resolved = f.dir / "resolved.json";
    std::ofstream(resolved) << r.output;
    RunResult again = run_cli("train --config " + resolved.string() + " --print-config");
    CHECK(again.output == r.output);
}

TEST_CASE("config with unknown keys is rejected with exit code 1") {
    Fixture& f = fixture();
    fs::path bad = f.dir / "bad.json";
    std::ofstream(bad) << R"({"modle": {}})";
    RunResult r = run_cli("train --config " + bad.string() + " --print-config");
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("modle") != std::string::npos);
}

TEST_CASE("epochs 0 writes only the initial checkpoint") {
    Fixture& f = fixture();
    fs::path out = f.dir / "run0";
    RunResult r = run_cli("train --config " + f.cfg_path.string() + " --epochs 0 --out " +
                          out.string());
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(out / "latest.ckpt"));
    std::ifstream metrics(out / "metrics.tsv");
    std::string line;
    int lines = 0;
    while (std::getline(metrics, line)) ++lines;
    CHECK(lines == 1);  // header only
}

TEST_CASE("train then eval covers every protocol") {
    Fixture& f = fixture();
    RunResult train = run_cli("train --config " + f.cfg_path.string());
    REQUIRE(train.exit_code == 0);
    fs::path run = f.dir / "run";
    REQUIRE(fs::exists(run / "latest.ckpt"));
    {
        std::ifstream metrics(run / "metrics.tsv");
        std::string line;
        int lines = 0;
        while (std::getline(metrics, line)) ++lines;
        CHECK(lines == 3);  // header + 2 epochs
    }

    std::string base = " --config " + f.cfg_path.string() + " --checkpoint " +
                       (run / "latest.ckpt").string();

    RunResult nmi = run_cli("eval" + base + " --protocol nmi");
    CHECK(nmi.exit_code == 0);
    CHECK(nmi.output.find("nmi_train\t") != std::string::npos);
    CHECK(nmi.output.find("nmi_test\t") != std::string::npos);

    RunResult probe = run_cli("eval" + base + " --protocol probe");
    CHECK(probe.exit_code == 0);
    CHECK(probe.output.find("probe_accuracy\t") != std::string::npos);

    RunResult zeroshot = run_cli("eval" + base + " --protocol zeroshot");
    CHECK(zeroshot.exit_code == 0);
    CHECK(zeroshot.output.find("zeroshot_accuracy\t") != std::string::npos);

    RunResult partseg = run_cli("eval" + base + " --protocol partseg --fraction 0.5");
    CHECK(partseg.exit_code == 0);
    CHECK(partseg.output.find("instance_miou\t") != std::string::npos);

    RunResult exp = run_cli("export" + base);
    CHECK(exp.exit_code == 0);
    CHECK(fs::exists(run / "embeddings.tsv"));
    std::string first = slurp(run / "embeddings.tsv");
    {
        std::istringstream ss(first);
        std::string line;
        int lines = 0;
        while (std::getline(ss, line)) ++lines;
        CHECK(lines == 21);  // header + 20 clouds
    }
    RunResult exp2 = run_cli("export" + base);
    CHECK(exp2.exit_code == 0);
    CHECK(slurp(run / "embeddings.tsv") == first);  // byte-identical re-export
}

TEST_CASE("eval rejects a checkpoint from a different model configuration") {
    Fixture& f = fixture();
    // Same checkpoint, incompatible config (different k_ub).
    nlohmann::json cfg = nlohmann::json::parse(slurp(f.cfg_path));
    cfg["model"]["k_ub"] = 5;
    fs::path other = f.dir / "other.json";
    std::ofstream(other) << cfg.dump();
    RunResult r = run_cli("eval --config " + other.string() + " --checkpoint " +
                          (f.dir / "run" / "latest.ckpt").string() + " --protocol nmi");
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("hash") != std::string::npos);
}

TEST_CASE("train resumes from a checkpoint") {
    Fixture& f = fixture();
    fs::path out = f.dir / "resume";
    RunResult two = run_cli("train --config " + f.cfg_path.string() + " --epochs 2 --out " +
                            out.string());
    REQUIRE(two.exit_code == 0);
    RunResult four = run_cli("train --config " + f.cfg_path.string() + " --epochs 4 --out " +
                             out.string() + " --resume " + (out / "latest.ckpt").string());
    CHECK(four.exit_code == 0);
    std::ifstream metrics(out / "metrics.tsv");
    std::string line;
    int lines = 0;
    while (std::getline(metrics, line)) ++lines;
    CHECK(lines == 5);  // header + 4 epochs
}

TEST_CASE("train --mask reconstruction runs the autoencoder-only ablation") {
    Fixture& f = fixture();
    fs::path out = f.dir / "mask_run";
    RunResult r = run_cli("train --config " + f.cfg_path.string() + " --mask reconstruction --out " +
                          out.string());
    CHECK(r.exit_code == 0);
    // Masked parts log zero cross-entropy.
    std::ifstream metrics(out / "metrics.tsv");
    std::string header, row;
    std::getline(metrics, header);
    std::getline(metrics, row);
    std::istringstream ss(row);
    std::string epoch, loss, kmeans, ce;
    std::getline(ss, epoch, '\t');
    std::getline(ss, loss, '\t');
    std::getline(ss, kmeans, '\t');
    std::getline(ss, ce, '\t');
    CHECK(std::stod(ce) == 0.0);
}

TEST_CASE("verify subcommand passes on a healthy build") {
    RunResult r = run_cli("verify");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("grad.matmul") != std::string::npos);
    CHECK(r.output.find("verification passed") != std::string::npos);
}
