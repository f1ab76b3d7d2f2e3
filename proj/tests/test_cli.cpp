#include "doctest.h"
#include "helpers.hpp"
#include "odp/cli.hpp"
#include "odp/transfer_baselines.hpp"
#include "odp/workspace.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace odp;
namespace fs = std::filesystem;

namespace {

int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv = {"odp"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli_main(static_cast<int>(argv.size()), argv.data());
}

fs::path base_dir() {
    fs::path dir = fs::temp_directory_path() / "odp_test_cli";
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const std::string& name, const std::vector<std::string>& lines) {
    fs::path p = base_dir() / name;
    std::ofstream out(p);
    for (const auto& l : lines) out << l << "\n";
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

const std::vector<std::string> kGridLines = {
    "lat_min=40.0", "lat_max=40.1", "lng_min=-74.0", "lng_max=-73.9", "rows=2", "cols=2"};

/// One tiny synthesized-and-preprocessed run shared by the cases below.
const fs::path& shared_workspace() {
    static fs::path ws = [] {
        fs::path trips = base_dir() / "trips.csv";
        std::vector<std::string> synth_lines = kGridLines;
        synth_lines.insert(synth_lines.end(),
                           {"days=9", "seed=11", "base_intensity=2", "noise=poisson",
                            "out=" + trips.string()});
        REQUIRE(run({"synth", "--config",
                     write_config("synth_shared.cfg", synth_lines).string()}) == 0);

        fs::path dir = base_dir() / "ws_shared";
        std::vector<std::string> prep_lines = kGridLines;
        prep_lines.insert(prep_lines.end(),
                          {"trips=" + trips.string(), "workspace=" + dir.string()});
        REQUIRE(run({"prep", "--config",
                     write_config("prep_shared.cfg", prep_lines).string()}) == 0);
        return dir;
    }();
    return ws;
}

/// Checkpoint of an AR model trained for zero epochs on the shared workspace.
const fs::path& ar0_checkpoint() {
    static fs::path ck = [] {
        fs::path out = base_dir() / "ar0";
        fs::path cfg = write_config(
            "train_ar0.cfg", {"model=ar", "epochs=0", "workspace=" + shared_workspace().string(),
                              "out_dir=" + out.string()});
        REQUIRE(run({"train", "--config", cfg.string()}) == 0);
        return out / "checkpoint.bin";
    }();
    return ck;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("argument and command errors are configuration failures") {
    CHECK(run({}) == 1);                                     // missing command
    CHECK(run({"train"}) == 1);                              // missing --config
    CHECK(run({"train", "--frob"}) == 1);                    // unknown flag
    fs::path cfg = write_config("empty.cfg", {});
    CHECK(run({"frobnicate", "--config", cfg.string()}) == 1);
    CHECK(run({"train", "--config", (base_dir() / "no_such.cfg").string()}) == 2);
}

TEST_CASE("synthesis is deterministic per seed") {
    fs::path a = base_dir() / "synth_a.csv";
    fs::path b = base_dir() / "synth_b.csv";
    fs::path c = base_dir() / "synth_c.csv";
    auto lines = [&](const fs::path& out, int seed) {
        std::vector<std::string> l = kGridLines;
        l.insert(l.end(), {"days=2", "seed=" + std::to_string(seed), "base_intensity=2",
                           "noise=poisson", "out=" + out.string()});
        return l;
    };
    CHECK(run({"synth", "--config", write_config("sa.cfg", lines(a, 3)).string()}) == 0);
    CHECK(run({"synth", "--config", write_config("sb.cfg", lines(b, 3)).string()}) == 0);
    CHECK(run({"synth", "--config", write_config("sc.cfg", lines(c, 4)).string()}) == 0);
    CHECK(slurp(a) == slurp(b));
    CHECK(slurp(a) != slurp(c));
    CHECK(slurp(a).rfind("pickup_datetime", 0) == 0);  // header comes first
}

TEST_CASE("preprocessing reruns are byte-identical on the data files") {
    const fs::path& ws1 = shared_workspace();
    fs::path ws2 = base_dir() / "ws_again";
    std::vector<std::string> prep_lines = kGridLines;
    prep_lines.insert(prep_lines.end(), {"trips=" + (base_dir() / "trips.csv").string(),
                                         "workspace=" + ws2.string()});
    REQUIRE(run({"prep", "--config", write_config("prep_again.cfg", prep_lines).string()}) == 0);

    CHECK(slurp(ws1 / "manifest.txt") == slurp(ws2 / "manifest.txt"));
    Dataset ds = load_workspace(ws1.string(), 3.6, 1e-8);
    REQUIRE(ds.T() >= 169);  // deep enough for the default weekly history
    for (int t : {1, 2, ds.T()}) {
        std::string od = "od_" + std::to_string(t) + ".txt";
        std::string ft = "feat_" + std::to_string(t) + ".txt";
        CHECK(slurp(ws1 / od) == slurp(ws2 / od));
        CHECK(slurp(ws1 / ft) == slurp(ws2 / ft));
    }
}

TEST_CASE("a header-only trip file needs an explicit time range") {
    fs::path trips = base_dir() / "header_only.csv";
    std::ofstream(trips) << "pickup_datetime,origin_lat,origin_lng,dest_lat,dest_lng\n";

    fs::path ws = base_dir() / "ws_empty";
    std::vector<std::string> l = kGridLines;
    l.insert(l.end(), {"trips=" + trips.string(), "workspace=" + ws.string(),
                       "start_time=2016-01-04 00:00:00", "slots=30"});
    CHECK(run({"prep", "--config", write_config("prep_empty.cfg", l).string()}) == 0);
    Dataset ds = load_workspace(ws.string(), 3.6, 1e-8);
    CHECK(ds.T() == 30);
    for (int t = 1; t <= 30; ++t) CHECK(ds.graph(t).total() == 0);

    // Without slots and start_time there is nothing to derive them from.
    std::vector<std::string> bare = kGridLines;
    bare.insert(bare.end(),
                {"trips=" + trips.string(), "workspace=" + (base_dir() / "ws_nope").string()});
    CHECK(run({"prep", "--config", write_config("prep_bare.cfg", bare).string()}) == 1);
}

TEST_CASE("training rejects parameterless models and unknown keys") {
    fs::path cfg = write_config(
        "train_hap.cfg",
        {"model=hap", "workspace=" + shared_workspace().string(),
         "out_dir=" + (base_dir() / "hap_out").string()});
    CHECK(run({"train", "--config", cfg.string()}) == 1);

    fs::path cfg2 = write_config(
        "train_bogus.cfg",
        {"model=ar", "workspace=" + shared_workspace().string(),
         "out_dir=" + (base_dir() / "bogus_out").string()});
    CHECK(run({"train", "--config", cfg2.string(), "--set", "bogus=1"}) == 1);

    fs::path cfg3 = write_config(
        "eval_missing_ws.cfg",
        {"model=ha+", "workspace=" + (base_dir() / "no_ws").string(),
         "out_dir=" + (base_dir() / "no_out").string()});
    CHECK(run({"eval", "--config", cfg3.string()}) == 2);
}

TEST_CASE("ar training writes the checkpoint, log, and config echo") {
    fs::path out = base_dir() / "ar1";
    fs::path cfg = write_config(
        "train_ar1.cfg", {"model=ar", "epochs=1", "workspace=" + shared_workspace().string(),
                          "out_dir=" + out.string()});
    REQUIRE(run({"train", "--config", cfg.string()}) == 0);
    CHECK(fs::exists(out / "checkpoint.bin"));
    CHECK(fs::exists(out / "odp_train_config.txt"));

    std::string log = slurp(out / "train_log.txt");
    CHECK(log.rfind("epoch, train_loss, val_loss, wall_seconds", 0) == 0);
    CHECK(log.find("\n1, ") != std::string::npos);

    std::string echo = slurp(out / "odp_train_config.txt");
    CHECK(echo.find("model=ar") != std::string::npos);
    CHECK(echo.find("epochs=1") != std::string::npos);
}

TEST_CASE("an untrained ar checkpoint scores exactly like the pooled average") {
    fs::path out_ar = base_dir() / "eval_ar0";
    fs::path cfg_ar = write_config(
        "eval_ar0.cfg", {"checkpoint=" + ar0_checkpoint().string(),
                         "workspace=" + shared_workspace().string(),
                         "out_dir=" + out_ar.string()});
    REQUIRE(run({"eval", "--config", cfg_ar.string()}) == 0);

    fs::path out_ha = base_dir() / "eval_hap_plus";
    fs::path cfg_ha = write_config(
        "eval_haplus.cfg", {"model=ha+", "workspace=" + shared_workspace().string(),
                            "out_dir=" + out_ha.string()});
    REQUIRE(run({"eval", "--config", cfg_ha.string()}) == 0);

    // Matching metric rows up to summation-order rounding; the timing
    // trailer may differ.
    auto rows_of = [&](const fs::path& p) {
        std::istringstream in(slurp(p / "report.txt"));
        std::vector<std::string> rows;
        std::string line;
        while (std::getline(in, line))
            if (!line.empty() && line[0] != '#') rows.push_back(line);
        return rows;
    };
    std::vector<std::string> ar_rows = rows_of(out_ar);
    std::vector<std::string> ha_rows = rows_of(out_ha);
    REQUIRE(ar_rows.size() == 7);  // header + 2 tasks x 3 default thresholds
    CHECK(ar_rows[0] == ha_rows[0]);
    for (std::size_t r = 1; r < ar_rows.size(); ++r) {
        auto af = split(ar_rows[r], ',');
        auto hf = split(ha_rows[r], ',');
        REQUIRE(af.size() == 6);
        REQUIRE(hf.size() == 6);
        CHECK(af[0] == hf[0]);                  // task
        CHECK(trim(af[1]) == trim(hf[1]));      // threshold
        CHECK(trim(af[5]) == trim(hf[5]));      // entry count
        for (int k = 2; k <= 4; ++k) {
            auto av = to_double(trim(af[static_cast<std::size_t>(k)]));
            auto hv = to_double(trim(hf[static_cast<std::size_t>(k)]));
            REQUIRE(av.has_value());
            REQUIRE(hv.has_value());
            CHECK(*av == doctest::Approx(*hv).epsilon(1e-12));
        }
    }
}

TEST_CASE("overrides that contradict a checkpoint are compatibility errors") {
    fs::path out = base_dir() / "eval_conflict";
    fs::path cfg = write_config(
        "eval_conflict.cfg", {"checkpoint=" + ar0_checkpoint().string(),
                              "workspace=" + shared_workspace().string(),
                              "out_dir=" + out.string()});
    CHECK(run({"eval", "--config", cfg.string(), "--set", "model=bgarn"}) == 3);
    CHECK(run({"eval", "--config", cfg.string(), "--set", "history=3"}) == 3);
    CHECK(run({"eval", "--config", cfg.string()}) == 0);  // no override, no conflict
}

TEST_CASE("predictions equal the library baseline values") {
    fs::path out = base_dir() / "predict_hap";
    fs::path cfg = write_config(
        "predict_hap.cfg", {"model=hap", "workspace=" + shared_workspace().string(),
                            "out_dir=" + out.string()});
    REQUIRE(run({"predict", "--config", cfg.string()}) == 0);

    Dataset ds = load_workspace(shared_workspace().string(), 3.6, 1e-8);
    BaselineRef ref = ha_baseline(ds.graphs(), ds.T(), 24, 7, HaMode::periodicity);

    std::istringstream dem(slurp(out / "demand.txt"));
    int cell;
    double value;
    int rows = 0;
    while (dem >> cell >> value) {
        CHECK(cell == rows);
        CHECK(value == std::max(0.0, ref.d(cell)));
        ++rows;
    }
    CHECK(rows == ds.n());

    std::istringstream od(slurp(out / "od.txt"));
    int i, j, entries = 0;
    while (od >> i >> j >> value) {
        CHECK(value == std::max(0.0, ref.G(i, j)));
        ++entries;
    }
    CHECK(entries == ds.n() * ds.n());
}

TEST_CASE("threshold overrides flow into the report") {
    fs::path out = base_dir() / "eval_thresh";
    fs::path cfg = write_config(
        "eval_thresh.cfg", {"model=ha+", "workspace=" + shared_workspace().string(),
                            "out_dir=" + out.string(), "thresholds=1e18"});
    REQUIRE(run({"eval", "--config", cfg.string()}) == 0);
    std::string report = slurp(out / "report.txt");
    CHECK(report.find("demand, 1e+18, undefined, undefined, undefined, 0\n") !=
          std::string::npos);
    CHECK(report.find("od, 1e+18, undefined") != std::string::npos);
    CHECK(fs::exists(out / "odp_eval_config.txt"));
}

TEST_CASE("a small network trains, evaluates, and predicts through the cli") {
    fs::path out = base_dir() / "bgarn1";
    fs::path cfg = write_config(
        "train_bgarn.cfg",
        {"model=bgarn", "epochs=1", "embed_dim=4", "heads=1",
         "workspace=" + shared_workspace().string(), "out_dir=" + out.string()});
    REQUIRE(run({"train", "--config", cfg.string()}) == 0);
    REQUIRE(fs::exists(out / "checkpoint.bin"));

    fs::path eval_out = base_dir() / "bgarn1_eval";
    fs::path eval_cfg = write_config(
        "eval_bgarn.cfg", {"checkpoint=" + (out / "checkpoint.bin").string(),
                           "workspace=" + shared_workspace().string(),
                           "out_dir=" + eval_out.string()});
    REQUIRE(run({"eval", "--config", eval_cfg.string()}) == 0);

    // Every defined metric parses as a finite value.
    std::istringstream in(slurp(eval_out / "report.txt"));
    std::string line;
    std::getline(in, line);  // header
    int defined = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto f = split(line, ',');
        REQUIRE(f.size() == 6);
        if (trim(f[2]) == "undefined") continue;
        for (int k = 2; k <= 4; ++k) {
            auto v = to_double(trim(f[static_cast<std::size_t>(k)]));
            REQUIRE(v.has_value());
            CHECK(std::isfinite(*v));
        }
        ++defined;
    }
    CHECK(defined == 6);

    fs::path pred_out = base_dir() / "bgarn1_pred";
    fs::path pred_cfg = write_config(
        "pred_bgarn.cfg", {"checkpoint=" + (out / "checkpoint.bin").string(),
                           "workspace=" + shared_workspace().string(),
                           "out_dir=" + pred_out.string()});
    REQUIRE(run({"predict", "--config", pred_cfg.string()}) == 0);
    CHECK(fs::exists(pred_out / "demand.txt"));
    CHECK(fs::exists(pred_out / "od.txt"));
}

}  // TEST_SUITE
