// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int exit_code;
    std::string output;
};

CmdResult run_cli(const std::string& args) {
    const std::string cmd = std::string(QFORGE_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string output;
    char buf[4096];
    while (std::fgets(buf, sizeof buf, pipe) != nullptr) output += buf;
    const int status = ::pclose(pipe);
    return {WEXITSTATUS(status), output};
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const std::string kTinyTrain =
    "--data synth:sine --task forecasting --window 8 --d-model 8 --bits 8 "
    "--epochs 4 --patience 3 --batch-size 64 --seed 3";

}  // namespace

TEST_CASE("cli train produces the artifact set") {
    const fs::path out = fresh_dir("qforge_cli_train");
    const CmdResult r = run_cli("train " + kTinyTrain + " --out " + out.string());
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    for (const char* f : {"model.json", "model_int.json", "training_log.csv", "metrics.json"})
        CHECK(fs::exists(out / f));

    const auto metrics = nlohmann::json::parse(slurp(out / "metrics.json"));
    CHECK(metrics.contains("config_hash"));
    CHECK(metrics.at("int").contains("rmse"));
    const std::string log = slurp(out / "training_log.csv");
    CHECK(log.find("# config_hash=") == 0);
    CHECK(log.find("epoch,train_loss,val_loss,lr,wall_time_s") != std::string::npos);
}

TEST_CASE("cli input errors exit with status 2") {
    const CmdResult r = run_cli("train --data /nonexistent/file.csv --out /tmp/qforge_none");
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("/nonexistent/file.csv") != std::string::npos);
}

TEST_CASE("cli export-vhdl and infer round trip") {
    const fs::path out = fresh_dir("qforge_cli_flow");
    REQUIRE(run_cli("train " + kTinyTrain + " --out " + out.string()).exit_code == 0);

    const fs::path rtl = out / "rtl";
    const CmdResult exp = run_cli("export-vhdl --model " + (out / "model_int.json").string() +
                                  " --platform xc7s15 --out " + rtl.string());
    INFO(exp.output);
    REQUIRE(exp.exit_code == 0);
    CHECK(fs::exists(rtl / "qf_top.vhd"));
    CHECK(fs::exists(rtl / "qf_tb.vhd"));
    CHECK(fs::exists(rtl / "vectors_in.txt"));
    CHECK(exp.output.find("energy") != std::string::npos);

    // infer over a small synthetic input: rows of one feature
    const fs::path input_csv = out / "infer_in.csv";
    {
        std::ofstream f(input_csv);
        f << "x\n";
        for (int t = 0; t < 20; ++t) f << 0.5 + 0.3 * std::sin(t / 5.0) << "\n";
    }
    const fs::path pred_csv = out / "predictions.csv";
    const CmdResult inf = run_cli("infer --model " + (out / "model_int.json").string() +
                                  " --input " + input_csv.string() + " --out " +
                                  pred_csv.string());
    INFO(inf.output);
    REQUIRE(inf.exit_code == 0);
    const std::string preds = slurp(pred_csv);
    CHECK(preds.find("window,code_0,value_0") == 0);
    // 20 rows, window 8 -> 13 complete windows
    CHECK(std::count(preds.begin(), preds.end(), '\n') == 14);
}

TEST_CASE("cli search writes a reproducible ledger and front files") {
    const fs::path out_a = fresh_dir("qforge_cli_search_a");
    const fs::path out_b = fresh_dir("qforge_cli_search_b");
    const std::string args =
        "search --data synth:sine --task forecasting --window 8 --trials 2 --population 2 "
        "--epochs 2 --patience 1 --seed 9 --out ";
    const CmdResult a = run_cli(args + out_a.string());
    INFO(a.output);
    REQUIRE(a.exit_code == 0);
    const CmdResult b = run_cli(args + out_b.string());
    REQUIRE(b.exit_code == 0);
    CHECK(slurp(out_a / "ledger.jsonl") == slurp(out_b / "ledger.jsonl"));
    CHECK(fs::exists(out_a / "pareto.csv"));
    CHECK(fs::exists(out_a / "pareto_scatter.dat"));
    CHECK(fs::exists(out_a / "pareto_plot.gnuplot"));

    // front rows are a subset of completed ledger rows
    std::ifstream ledger(out_a / "ledger.jsonl");
    std::string line;
    std::size_t completed = 0;
    while (std::getline(ledger, line))
        if (line.find("\"completed\"") != std::string::npos) ++completed;
    std::ifstream front(out_a / "pareto.csv");
    std::size_t front_rows = 0;
    while (std::getline(front, line)) ++front_rows;
    CHECK(front_rows - 1 <= completed);  // header line
}

TEST_CASE("cli strict mode flags budget violations with exit 3") {
    const fs::path out = fresh_dir("qforge_cli_strict");
    // d_model=64 at 8 bits exceeds the small fabric
    const std::string train_args =
        "--data synth:sine --task forecasting --window 8 --d-model 64 --bits 8 "
        "--epochs 2 --patience 1 --batch-size 64 --seed 5";
    REQUIRE(run_cli("train " + train_args + " --out " + out.string()).exit_code == 0);
    const CmdResult strict =
        run_cli("export-vhdl --model " + (out / "model_int.json").string() +
                " --platform ice40up5k --strict --out " + (out / "rtl").string());
    CHECK(strict.exit_code == 3);
    // without --strict the export still lands but warns
    const CmdResult lax = run_cli("export-vhdl --model " + (out / "model_int.json").string() +
                                  " --platform ice40up5k --out " + (out / "rtl2").string());
    CHECK(lax.exit_code == 0);
    CHECK(lax.output.find("deployable no") != std::string::npos);
    CHECK(fs::exists(out / "rtl2" / "qf_top.vhd"));
}
