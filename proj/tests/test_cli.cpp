#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include <json.hpp>

#include "fixtures.hpp"
#include "smahyper/checkpoint.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
    static const fs::path dir = testsupport::scratch_dir("cli");
    return dir;
}

// Runs the CLI with `args`, output to cli.log; returns the exit status.
int cli(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " \"" SMAHYPER_CLI_PATH "\" " + args + " >>\"" +
                            (workdir() / "cli.log").string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

nlohmann::json base_config() {
    return {{"manifest", "city/dataset.manifest"},
            {"output_dir", "run"},
            {"input_steps", 6},
            {"horizon", 2},
            {"embed_dim", 8},
            {"heads", 2},
            {"k", 3},
            {"k_members", 3},
            {"batch_size", 8},
            {"max_epochs", 1},
            {"seed", 1}};
}

fs::path write_config(const std::string& name, const nlohmann::json& j) {
    const fs::path p = workdir() / name;
    std::ofstream(p) << j.dump(2);
    return p;
}

// Synthetic city plus one trained run, created once.
const fs::path& trained_config() {
    static const fs::path cfg = [] {
        const int made = cli("make-synthetic --out " + q(workdir() / "city") +
                             " --regions 9 --steps 80 --hotspots 2 --seed 5");
        REQUIRE(made == 0);
        const fs::path c = write_config("config.json", base_config());
        REQUIRE(cli("train --quiet --config " + q(c)) == 0);
        return c;
    }();
    return cfg;
}

}  // namespace

TEST_CASE("the full command sequence succeeds") {
    const fs::path cfg = trained_config();
    const fs::path run = workdir() / "run";
    CHECK(fs::exists(run / "metrics.csv"));
    CHECK(fs::exists(run / "last.ckpt"));
    CHECK(cli("ingest --config " + q(cfg)) == 0);
    CHECK(fs::exists(run / "ingest.json"));
    CHECK(cli("evaluate --config " + q(cfg)) == 0);
    CHECK(fs::exists(run / "eval_test_model.csv"));
    CHECK(cli("evaluate --config " + q(cfg) + " --baseline persistence --split val") == 0);
    CHECK(fs::exists(run / "eval_val_persistence.csv"));
    CHECK(cli("predict --config " + q(cfg) + " --out " + q(workdir() / "pred.csv")) == 0);
    CHECK(fs::exists(workdir() / "pred.csv"));
    CHECK(cli("export --config " + q(cfg) + " --out " + q(workdir() / "export")) == 0);
    CHECK(fs::exists(workdir() / "export" / "predictions_test.csv"));
    CHECK(fs::exists(workdir() / "export" / "hyperedge_members_S.csv"));
    CHECK(cli("train --quiet --config " + q(cfg) + " --resume " + q(run / "last.ckpt")) == 0);
    CHECK(cli("--help") == 0);
}

TEST_CASE("usage errors exit with status 1") {
    const fs::path cfg = trained_config();
    CHECK(cli("") == 1);
    CHECK(cli("train") == 1);
    CHECK(cli("train --config " + q(cfg) + " --bogus") == 1);
    CHECK(cli("frobnicate") == 1);
    CHECK(cli("evaluate --config " + q(cfg) + " --split holdout") == 1);
    CHECK(cli("evaluate --config " + q(cfg) + " --baseline oracle") == 1);
    CHECK(cli("make-synthetic --out " + q(workdir() / "tiny") + " --regions 1") == 1);
    CHECK(cli("train --config " + q(workdir() / "no_such.json")) == 1);

    nlohmann::json unknown = base_config();
    unknown["embed_dims"] = 8;
    CHECK(cli("train --config " + q(write_config("unknown.json", unknown))) == 1);
    nlohmann::json bad = base_config();
    bad["batch_size"] = 5;
    CHECK(cli("train --config " + q(write_config("bad.json", bad))) == 1);
    CHECK(cli("ingest --config " + q(cfg), "SMAHYPER_EMBED_DIM=wide") == 1);
    CHECK(cli("ingest --config " + q(cfg), "SMAHYPER_NOT_A_KEY=1") == 1);
}

TEST_CASE("data errors exit with status 2") {
    const fs::path cfg = trained_config();
    nlohmann::json missing = base_config();
    missing["manifest"] = "nowhere/dataset.manifest";
    CHECK(cli("ingest --config " + q(write_config("missing.json", missing))) == 2);

    // A corrupted region list.
    fs::copy(workdir() / "city", workdir() / "broken", fs::copy_options::recursive | fs::copy_options::overwrite_existing);
    {
        std::ofstream add(workdir() / "broken" / "regions.csv", std::ios::app);
        add << "R0\n";  // duplicate region id
    }
    nlohmann::json broken = base_config();
    broken["manifest"] = "broken/dataset.manifest";
    broken["output_dir"] = "broken_run";
    CHECK(cli("ingest --config " + q(write_config("broken.json", broken))) == 2);

    CHECK(cli("evaluate --config " + q(cfg) + " --checkpoint " + q(workdir() / "absent.ckpt")) == 2);

    // A checkpoint trained on a different city.
    CHECK(cli("make-synthetic --out " + q(workdir() / "city12") + " --regions 12 --steps 80 --hotspots 2") == 0);
    nlohmann::json other = base_config();
    other["manifest"] = "city12/dataset.manifest";
    CHECK(cli("evaluate --config " + q(write_config("other.json", other)) + " --checkpoint " +
              q(workdir() / "run" / "last.ckpt")) == 2);
}

TEST_CASE("numerical failures exit with status 3") {
    const fs::path cfg = trained_config();
    smahyper::Checkpoint ckpt = smahyper::load_checkpoint((workdir() / "run" / "last.ckpt").string());
    for (auto& p : ckpt.params) p.fill(std::numeric_limits<double>::quiet_NaN());
    const fs::path poisoned = workdir() / "poisoned.ckpt";
    smahyper::save_checkpoint(ckpt, poisoned.string());
    nlohmann::json j = base_config();
    j["max_epochs"] = 5;
    j["output_dir"] = "nan_run";
    CHECK(cli("train --quiet --config " + q(write_config("nan.json", j)) + " --resume " + q(poisoned)) == 3);
    CHECK(fs::exists(workdir() / "nan_run" / "nan_dump.txt"));
}
