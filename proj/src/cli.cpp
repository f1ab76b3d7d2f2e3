#include "odp/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "odp/bgarn.hpp"
#include "odp/config.hpp"
#include "odp/synthetic.hpp"
#include "odp/training_eval.hpp"
#include "odp/workspace.hpp"

namespace fs = std::filesystem;

namespace odp {
namespace {

struct CliArgs {
    std::string cmd;
    std::string config_path;
    std::vector<std::string> sets;
};

const char* kUsage =
    "usage: odp prep|synth|train|eval|predict --config <file> [--set key=value ...]\n";

CliArgs parse_cli(int argc, const char* const* argv) {
    if (argc < 2) throw ConfigError(std::string("missing command\n") + kUsage);
    CliArgs a;
    a.cmd = argv[1];
    for (int i = 2; i < argc; ++i) {
        std::string arg = argv[i];
        if (arg == "--config") {
            if (i + 1 >= argc) throw ConfigError("--config expects a file path");
            a.config_path = argv[++i];
        } else if (arg == "--set") {
            if (i + 1 >= argc) throw ConfigError("--set expects key=value");
            a.sets.push_back(argv[++i]);
        } else {
            throw ConfigError("unknown argument '" + arg + "'\n" + kUsage);
        }
    }
    if (a.config_path.empty()) throw ConfigError(std::string("--config is required\n") + kUsage);
    return a;
}

KvConfig load_cli_config(const CliArgs& a, const std::vector<std::string>& allowed) {
    KvConfig cfg = KvConfig::from_file(a.config_path);
    cfg.apply_env(allowed);
    for (const auto& kv : a.sets) cfg.apply_set(kv);
    cfg.restrict_to(allowed);
    return cfg;
}

/// Echo the merged configuration into the output directory so a run can be
/// reproduced from its artifacts alone.
void write_config_echo(const std::string& dir, const std::string& cmd, const KvConfig& cfg) {
    std::ofstream out(fs::path(dir) / ("odp_" + cmd + "_config.txt"));
    if (!out) throw IoError("cannot write config echo in '" + dir + "'");
    for (const auto& [k, v] : cfg.items()) out << k << "=" << v << "\n";
}

GridSpec grid_from_config(const KvConfig& cfg) {
    auto need = [&](const char* key) {
        if (!cfg.has(key)) throw ConfigError(std::string("config key '") + key + "' is required");
        return cfg.get_double(key, 0.0);
    };
    return make_grid_spec(need("lat_min"), need("lat_max"), need("lng_min"), need("lng_max"),
                          static_cast<int>(cfg.get_int("rows", 0)),
                          static_cast<int>(cfg.get_int("cols", 0)),
                          cfg.get_double("slot_hours", 1.0));
}

std::int64_t timestamp_from_config(const KvConfig& cfg, const std::string& key,
                                   const std::string& def) {
    std::string s = cfg.get_str(key, def);
    auto t = parse_timestamp(s);
    if (!t) throw ConfigError("config key '" + key + "' is not a timestamp: " + s);
    return *t;
}

// ---- enum parsing ------------------------------------------------------

HeadAgg parse_agg(const std::string& s) {
    if (s == "average") return HeadAgg::average;
    if (s == "concat") return HeadAgg::concat;
    throw ConfigError("aggregation must be average or concat, got '" + s + "'");
}

CellType parse_cell(const std::string& s) {
    if (s == "lstm") return CellType::lstm;
    if (s == "gru") return CellType::gru;
    throw ConfigError("cell must be lstm or gru, got '" + s + "'");
}

TuneScheme parse_scheme(const std::string& s) {
    if (s == "none") return TuneScheme::none;
    if (s == "sum") return TuneScheme::sum;
    if (s == "wsum") return TuneScheme::wsum;
    if (s == "mult") return TuneScheme::mult;
    throw ConfigError("scheme must be none, sum, wsum, or mult, got '" + s + "'");
}

BaselineSource parse_baseline(const std::string& s) {
    if (s == "ha+") return BaselineSource::ha_plus;
    if (s == "hat") return BaselineSource::ha_t;
    if (s == "hap") return BaselineSource::ha_p;
    if (s == "ar") return BaselineSource::ar;
    throw ConfigError("baseline must be ha+, hat, hap, or ar, got '" + s + "'");
}

bool is_ha_model(const std::string& m) { return m == "ha+" || m == "hat" || m == "hap"; }

HaMode ha_mode_of(const std::string& m) {
    if (m == "ha+") return HaMode::plus;
    if (m == "hat") return HaMode::tendency;
    return HaMode::periodicity;
}

// ---- shared config blocks ------------------------------------------------

const std::vector<std::string> kModelKeys = {
    "aggregation", "baseline", "cell",   "embed_dim",  "heads", "history",
    "model",       "residual", "scheme", "share_cell", "wsum_w"};

std::vector<std::string> with_model_keys(std::vector<std::string> extra) {
    extra.insert(extra.end(), kModelKeys.begin(), kModelKeys.end());
    std::sort(extra.begin(), extra.end());
    return extra;
}

BgarnConfig bgarn_config_from(const KvConfig& cfg, const Dataset& ds) {
    BgarnConfig bc;
    bc.n = ds.n();
    bc.d_f = feature_dim(ds.spec());
    bc.l = ds.spec().slots_per_day();
    bc.d_e = static_cast<int>(cfg.get_int("embed_dim", 16));
    bc.K = static_cast<int>(cfg.get_int("heads", 3));
    bc.P = static_cast<int>(cfg.get_int("history", 7));
    bc.agg = parse_agg(cfg.get_str("aggregation", "average"));
    bc.residual = cfg.get_bool("residual", true);
    bc.cell = parse_cell(cfg.get_str("cell", "lstm"));
    bc.share_cell = cfg.get_bool("share_cell", true);
    bc.scheme = parse_scheme(cfg.get_str("scheme", "mult"));
    bc.wsum_w = cfg.get_double("wsum_w", 0.5);
    bc.baseline = parse_baseline(cfg.get_str("baseline", "ha+"));
    bc.eta_d = cfg.get_double("eta_d", 0.8);
    bc.eta_o = cfg.get_double("eta_o", 0.2);
    bc.beta = cfg.get_double("smooth_l1_beta", 1.0);
    if (bc.d_e < 1) throw ConfigError("embed_dim must be at least 1");
    if (bc.K < 1) throw ConfigError("heads must be at least 1");
    if (bc.P < 1) throw ConfigError("history must be at least 1");
    if (bc.wsum_w < 0 || bc.wsum_w > 1) throw ConfigError("wsum_w must be in [0, 1]");
    if (bc.eta_d < 0 || bc.eta_o < 0) throw ConfigError("eta_d and eta_o must be nonnegative");
    if (bc.beta <= 0) throw ConfigError("smooth_l1_beta must be positive");
    return bc;
}

TrainSettings train_settings_from(const KvConfig& cfg) {
    TrainSettings ts;
    ts.epochs = static_cast<int>(cfg.get_int("epochs", 200));
    ts.batch_size = static_cast<int>(cfg.get_int("batch_size", 32));
    ts.clip_norm = cfg.get_double("clip_norm", 10.0);
    ts.lr = cfg.get_double("lr", 1e-3);
    ts.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 42));
    if (ts.epochs < 0) throw ConfigError("epochs must be nonnegative");
    if (ts.batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (ts.clip_norm <= 0) throw ConfigError("clip_norm must be positive");
    if (ts.lr <= 0) throw ConfigError("lr must be positive");
    return ts;
}

struct SplitFracs {
    double train, val;
};

SplitFracs split_from(const KvConfig& cfg) {
    SplitFracs f{cfg.get_double("split_train", 0.7), cfg.get_double("split_val", 0.1)};
    if (f.train < 0 || f.val < 0 || f.train + f.val > 1.0 + 1e-12)
        throw ConfigError("split_train and split_val must be nonnegative and sum to at most 1");
    return f;
}

/// Valid truth-bearing targets: make_samples minus the T+1 forecasting slot.
std::vector<int> truth_targets(const Dataset& ds, int l, int P) {
    std::vector<int> t = make_samples(ds.T(), l, P);
    while (!t.empty() && t.back() > ds.T()) t.pop_back();
    return t;
}

// ---- checkpoint compatibility ------------------------------------------

void check_conflicts(const KvConfig& user, const KvConfig& echo) {
    struct KeySpec {
        const char* key;
        char type;  // s = string, i = integer, d = double, b = boolean
    };
    static const KeySpec specs[] = {
        {"aggregation", 's'}, {"baseline", 's'}, {"cell", 's'},       {"embed_dim", 'i'},
        {"heads", 'i'},       {"history", 'i'},  {"model", 's'},      {"residual", 'b'},
        {"scheme", 's'},      {"share_cell", 'b'}, {"wsum_w", 'd'}};
    std::vector<std::string> bad;
    for (const auto& spec : specs) {
        if (!user.has(spec.key) || !echo.has(spec.key)) continue;
        bool same = true;
        switch (spec.type) {
            case 'i': same = user.get_int(spec.key, 0) == echo.get_int(spec.key, 0); break;
            case 'd': same = user.get_double(spec.key, 0) == echo.get_double(spec.key, 0); break;
            case 'b': same = user.get_bool(spec.key, false) == echo.get_bool(spec.key, false); break;
            default: same = user.get_str(spec.key, "") == echo.get_str(spec.key, ""); break;
        }
        if (!same)
            bad.push_back(std::string(spec.key) + " (config " + user.get_str(spec.key, "") +
                          ", checkpoint " + echo.get_str(spec.key, "") + ")");
    }
    if (!bad.empty()) {
        std::string msg = "checkpoint was trained with different settings: ";
        for (std::size_t i = 0; i < bad.size(); ++i) msg += (i ? "; " : "") + bad[i];
        throw CompatError(msg);
    }
}

void check_shape(const KvConfig& echo, const Dataset& ds) {
    struct Dim {
        const char* key;
        long long actual;
    };
    const Dim dims[] = {{"n", ds.n()},
                        {"feature_dim", feature_dim(ds.spec())},
                        {"slots_per_day", ds.spec().slots_per_day()}};
    for (const auto& d : dims) {
        long long expect = echo.get_int(d.key, d.actual);
        if (expect != d.actual)
            throw CompatError(std::string("workspace mismatch: checkpoint expects ") + d.key +
                              "=" + std::to_string(expect) + ", workspace has " +
                              std::to_string(d.actual));
    }
}

/// Copy checkpoint tensors into a registered store; names and shapes must
/// match what registration produced.
void load_params(const Checkpoint& ck, ad::ParamStore& ps) {
    for (std::size_t i = 0; i < ps.size(); ++i) {
        ad::Tensor& t = ps[i];
        const Eigen::MatrixXd* v = ck.find(t.name);
        if (!v) throw CompatError("checkpoint is missing tensor '" + t.name + "'");
        if (v->rows() != t.value.rows() || v->cols() != t.value.cols())
            throw CompatError("checkpoint tensor '" + t.name + "' has shape " +
                              std::to_string(v->rows()) + "x" + std::to_string(v->cols()) +
                              ", expected " + std::to_string(t.value.rows()) + "x" +
                              std::to_string(t.value.cols()));
        t.value = *v;
    }
}

// ---- checkpoint echo ------------------------------------------------------

void set_kv(KvConfig& cfg, const std::string& key, const std::string& value) {
    cfg.apply_set(key + "=" + value);
}

std::string agg_name(HeadAgg a) { return a == HeadAgg::average ? "average" : "concat"; }
std::string cell_name(CellType c) { return c == CellType::lstm ? "lstm" : "gru"; }

std::string scheme_name(TuneScheme s) {
    switch (s) {
        case TuneScheme::none: return "none";
        case TuneScheme::sum: return "sum";
        case TuneScheme::wsum: return "wsum";
        case TuneScheme::mult: return "mult";
    }
    return "mult";
}

std::string baseline_name(BaselineSource b) {
    switch (b) {
        case BaselineSource::ha_plus: return "ha+";
        case BaselineSource::ha_t: return "hat";
        case BaselineSource::ha_p: return "hap";
        case BaselineSource::ar: return "ar";
    }
    return "ha+";
}

void echo_shape(KvConfig& echo, const Dataset& ds) {
    set_kv(echo, "n", std::to_string(ds.n()));
    set_kv(echo, "feature_dim", std::to_string(feature_dim(ds.spec())));
    set_kv(echo, "slots_per_day", std::to_string(ds.spec().slots_per_day()));
}

void echo_training(KvConfig& echo, const TrainSettings& ts, const SplitFracs& f) {
    set_kv(echo, "epochs", std::to_string(ts.epochs));
    set_kv(echo, "batch_size", std::to_string(ts.batch_size));
    set_kv(echo, "clip_norm", format_double(ts.clip_norm));
    set_kv(echo, "lr", format_double(ts.lr));
    set_kv(echo, "seed", std::to_string(ts.seed));
    set_kv(echo, "split_train", format_double(f.train));
    set_kv(echo, "split_val", format_double(f.val));
}

std::string bgarn_echo(const BgarnConfig& bc, const Dataset& ds, const TrainSettings& ts,
                       const SplitFracs& f) {
    KvConfig echo;
    set_kv(echo, "model", "bgarn");
    set_kv(echo, "embed_dim", std::to_string(bc.d_e));
    set_kv(echo, "heads", std::to_string(bc.K));
    set_kv(echo, "history", std::to_string(bc.P));
    set_kv(echo, "aggregation", agg_name(bc.agg));
    set_kv(echo, "residual", bc.residual ? "true" : "false");
    set_kv(echo, "cell", cell_name(bc.cell));
    set_kv(echo, "share_cell", bc.share_cell ? "true" : "false");
    set_kv(echo, "scheme", scheme_name(bc.scheme));
    set_kv(echo, "wsum_w", format_double(bc.wsum_w));
    set_kv(echo, "baseline", baseline_name(bc.baseline));
    set_kv(echo, "eta_d", format_double(bc.eta_d));
    set_kv(echo, "eta_o", format_double(bc.eta_o));
    set_kv(echo, "smooth_l1_beta", format_double(bc.beta));
    echo_shape(echo, ds);
    echo_training(echo, ts, f);
    std::string text;
    for (const auto& [k, v] : echo.items()) text += k + "=" + v + "\n";
    return text;
}

std::string ar_echo(int P, double eta_d, double eta_o, double beta, const Dataset& ds,
                    const TrainSettings& ts, const SplitFracs& f) {
    KvConfig echo;
    set_kv(echo, "model", "ar");
    set_kv(echo, "history", std::to_string(P));
    set_kv(echo, "eta_d", format_double(eta_d));
    set_kv(echo, "eta_o", format_double(eta_o));
    set_kv(echo, "smooth_l1_beta", format_double(beta));
    echo_shape(echo, ds);
    echo_training(echo, ts, f);
    std::string text;
    for (const auto& [k, v] : echo.items()) text += k + "=" + v + "\n";
    return text;
}

void write_train_log(const std::string& path, const TrainResult& res) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write train log '" + path + "'");
    out << "epoch, train_loss, val_loss, wall_seconds\n";
    for (const auto& r : res.log)
        out << r.epoch << ", " << format_double(r.train_loss) << ", "
            << format_double(r.val_loss) << ", " << format_double(r.wall_seconds) << "\n";
}

// ---- commands --------------------------------------------------------------

int run_prep(const CliArgs& args) {
    const std::vector<std::string> allowed = {
        "col_d_lat", "col_d_lng", "col_delimiter", "col_o_lat", "col_o_lng", "col_pickup",
        "cols",      "lat_max",   "lat_min",       "lng_max",   "lng_min",   "rows",
        "slot_hours", "slots",    "start_time",    "trips",     "workspace"};
    KvConfig cfg = load_cli_config(args, allowed);
    GridSpec g = grid_from_config(cfg);
    std::string trips = cfg.require_str("trips");
    std::string wsdir = cfg.require_str("workspace");

    ColumnMap cm;
    cm.pickup_time = cfg.get_str("col_pickup", cm.pickup_time);
    cm.o_lat = cfg.get_str("col_o_lat", cm.o_lat);
    cm.o_lng = cfg.get_str("col_o_lng", cm.o_lng);
    cm.d_lat = cfg.get_str("col_d_lat", cm.d_lat);
    cm.d_lng = cfg.get_str("col_d_lng", cm.d_lng);
    std::string delim = cfg.get_str("col_delimiter", ",");
    if (delim.size() != 1) throw ConfigError("col_delimiter must be a single character");
    cm.delimiter = delim[0];

    std::ifstream in(trips);
    if (!in) throw IoError("cannot open trip file '" + trips + "'");
    ParseResult pr = parse_trips(in, cm);
    if (pr.requests.empty()) std::cerr << "warning: no parseable requests in '" << trips << "'\n";

    std::int64_t start;
    if (cfg.has("start_time")) {
        start = timestamp_from_config(cfg, "start_time", "");
    } else {
        if (pr.requests.empty())
            throw ConfigError("cannot derive start_time from an empty trip file; set start_time");
        std::int64_t lo = pr.requests.front().time;
        for (const auto& r : pr.requests) lo = std::min(lo, r.time);
        start = lo - ((lo % 86400) + 86400) % 86400;  // floor to midnight
    }

    int T;
    if (cfg.has("slots")) {
        T = static_cast<int>(cfg.get_int("slots", 0));
        if (T < 1) throw ConfigError("slots must be at least 1");
    } else {
        if (pr.requests.empty())
            throw ConfigError("cannot derive slots from an empty trip file; set slots");
        std::int64_t hi = pr.requests.front().time;
        for (const auto& r : pr.requests) hi = std::max(hi, r.time);
        if (hi < start) throw ConfigError("start_time is later than every request");
        T = static_cast<int>((hi - start) / g.slot_seconds() + 1);
    }

    ODSequence seq = build_od_sequence(pr.requests, g, start, T);
    if (seq.dropped > 0)
        std::cerr << "warning: dropped " << seq.dropped
                  << " requests outside the grid or time range\n";

    write_workspace(wsdir, g, start, seq, pr.skipped);
    write_config_echo(wsdir, "prep", cfg);
    long long kept = 0;
    for (const auto& graph : seq.graphs) kept += graph.total();
    std::cout << "workspace '" << wsdir << "': " << g.n() << " cells, " << T << " slots, "
              << kept << " requests kept (" << seq.dropped << " dropped, " << pr.skipped
              << " skipped)\n";
    return 0;
}

int run_synth(const CliArgs& args) {
    const std::vector<std::string> allowed = {
        "base_intensity", "cols", "days",       "hotspots", "lat_max", "lat_min",
        "lng_max",        "lng_min", "noise",   "out",      "profile", "rows",
        "seed",           "slot_hours", "start_time"};
    KvConfig cfg = load_cli_config(args, allowed);

    SyntheticSpec spec;
    spec.grid = grid_from_config(cfg);
    spec.start_time = timestamp_from_config(cfg, "start_time", "2016-01-04 00:00:00");
    spec.days = static_cast<int>(cfg.get_int("days", 21));
    spec.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 42));
    spec.base_intensity = cfg.get_double("base_intensity", 2.0);

    int l = spec.grid.slots_per_day();
    std::string profile = cfg.get_str("profile", "flat");
    if (profile == "flat") {
        spec.profile.assign(l, 1.0);
    } else {
        for (const auto& part : split(profile, ',')) {
            auto v = to_double(trim(part));
            if (!v)
                throw ConfigError("profile must be 'flat' or a comma-separated list of numbers");
            spec.profile.push_back(*v);
        }
    }

    std::string noise = cfg.get_str("noise", "none");
    if (noise == "poisson")
        spec.poisson = true;
    else if (noise != "none")
        throw ConfigError("noise must be none or poisson, got '" + noise + "'");

    // hotspots: semicolon-separated "src-dst:extra" triples.
    std::string hs = cfg.get_str("hotspots", "");
    for (const auto& item : split(hs, ';')) {
        std::string entry = trim(item);
        if (entry.empty()) continue;
        auto colon = entry.find(':');
        auto dash = entry.find('-');
        if (colon == std::string::npos || dash == std::string::npos || dash > colon)
            throw ConfigError("hotspot entry must look like src-dst:extra, got '" + entry + "'");
        auto src = to_int(trim(entry.substr(0, dash)));
        auto dst = to_int(trim(entry.substr(dash + 1, colon - dash - 1)));
        auto extra = to_double(trim(entry.substr(colon + 1)));
        if (!src || !dst || !extra)
            throw ConfigError("hotspot entry must look like src-dst:extra, got '" + entry + "'");
        spec.hotspots.emplace_back(static_cast<int>(*src), static_cast<int>(*dst), *extra);
    }

    validate_synthetic(spec);

    std::string out_path = cfg.require_str("out");
    if (fs::path(out_path).has_parent_path()) fs::create_directories(fs::path(out_path).parent_path());
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot write trip file '" + out_path + "'");
    long long written = odp::run_synth(spec, out);
    std::cout << "wrote " << written << " requests over " << spec.T() << " slots to '"
              << out_path << "'\n";
    return 0;
}

int run_train(const CliArgs& args) {
    const std::vector<std::string> allowed = with_model_keys(
        {"ar_checkpoint", "batch_size", "clip_norm", "epochs", "epsilon", "eta_d", "eta_o",
         "geo_km", "lr", "out_dir", "seed", "smooth_l1_beta", "split_train", "split_val",
         "workspace"});
    KvConfig cfg = load_cli_config(args, allowed);

    std::string model = cfg.get_str("model", "bgarn");
    if (is_ha_model(model))
        throw ConfigError("model '" + model +
                          "' has no trainable parameters; use eval or predict directly");
    if (model != "bgarn" && model != "ar")
        throw ConfigError("model must be bgarn, ha+, hat, hap, or ar, got '" + model + "'");

    Dataset ds = load_workspace(cfg.require_str("workspace"), cfg.get_double("geo_km", 3.6),
                                cfg.get_double("epsilon", 1e-8));
    std::string out_dir = cfg.require_str("out_dir");
    TrainSettings ts = train_settings_from(cfg);
    SplitFracs fr = split_from(cfg);
    int l = ds.spec().slots_per_day();

    Checkpoint ck;
    ck.seed = ts.seed;
    TrainResult res;

    if (model == "bgarn") {
        BgarnConfig bc = bgarn_config_from(cfg, ds);
        std::vector<int> targets = truth_targets(ds, l, bc.P);
        if (targets.empty())
            throw ConfigError("history too short: no target slot fits " + std::to_string(bc.P) +
                              " days of " + std::to_string(l) + " slots in " +
                              std::to_string(ds.T()) + " slots");
        Split split = chronological_split(targets, fr.train, fr.val);
        if (split.train.empty()) throw ConfigError("train split is empty");

        BgarnModel m(bc);
        init_bgarn(m, ts.seed);
        if (bc.baseline == BaselineSource::ar) {
            std::string ar_path = cfg.get_str("ar_checkpoint", "");
            if (ar_path.empty())
                throw ConfigError("baseline=ar needs ar_checkpoint=<trained AR checkpoint>");
            Checkpoint ar_ck = load_checkpoint(ar_path);
            KvConfig ar_cfg = KvConfig::from_text(ar_ck.config_echo);
            if (ar_cfg.get_str("model", "") != "ar")
                throw CompatError("ar_checkpoint was trained with model=" +
                                  ar_cfg.get_str("model", "?") + ", expected ar");
            if (ar_cfg.get_int("history", bc.P) != bc.P)
                throw CompatError("ar_checkpoint history=" +
                                  std::to_string(ar_cfg.get_int("history", 0)) +
                                  " differs from history=" + std::to_string(bc.P));
            load_params(ar_ck, m.ar_ps);
        }

        auto forward = [&](ad::Tape& tape, int tau, bool train) {
            BgarnOutput out = bgarn_forward(tape, m, ds, tau, train, train);
            return bgarn_loss(out, ds.demand(tau), ds.dense(tau), m.cfg);
        };
        auto snap = [&] {
            return std::vector<Eigen::MatrixXd>{m.bn.running_mean, m.bn.running_var};
        };
        auto restore = [&](const std::vector<Eigen::MatrixXd>& v) {
            m.bn.running_mean = v.at(0);
            m.bn.running_var = v.at(1);
        };
        res = train_loop(m.ps, forward, split.train, split.val, ts, snap, restore);

        for (std::size_t i = 0; i < m.ps.size(); ++i)
            ck.tensors.emplace_back(m.ps[i].name, m.ps[i].value);
        ck.tensors.emplace_back("stat.bn.mean", m.bn.running_mean);
        ck.tensors.emplace_back("stat.bn.var", m.bn.running_var);
        for (std::size_t i = 0; i < m.ar_ps.size(); ++i)
            ck.tensors.emplace_back(m.ar_ps[i].name, m.ar_ps[i].value);
        ck.config_echo = bgarn_echo(bc, ds, ts, fr);
    } else {
        int P = static_cast<int>(cfg.get_int("history", 7));
        if (P < 1) throw ConfigError("history must be at least 1");
        double eta_d = cfg.get_double("eta_d", 0.8);
        double eta_o = cfg.get_double("eta_o", 0.2);
        double beta = cfg.get_double("smooth_l1_beta", 1.0);
        if (eta_d < 0 || eta_o < 0) throw ConfigError("eta_d and eta_o must be nonnegative");
        if (beta <= 0) throw ConfigError("smooth_l1_beta must be positive");

        std::vector<int> targets = truth_targets(ds, l, P);
        if (targets.empty())
            throw ConfigError("history too short: no target slot fits " + std::to_string(P) +
                              " days of " + std::to_string(l) + " slots in " +
                              std::to_string(ds.T()) + " slots");
        Split split = chronological_split(targets, fr.train, fr.val);
        if (split.train.empty()) throw ConfigError("train split is empty");

        ad::ParamStore ps;
        register_ar(ps, P);
        auto forward = [&](ad::Tape& tape, int tau, bool) {
            auto [d_hat, g_hat] = ar_forward(tape, ds.graphs(), tau - 1, l, P, ps);
            ad::Var ld = ad::smooth_l1_loss(d_hat, ds.demand(tau), beta);
            ad::Var lo = ad::smooth_l1_loss(g_hat, ds.dense(tau), beta);
            return ad::add_scaled(ld, lo, eta_d, eta_o);
        };
        res = train_loop(ps, forward, split.train, split.val, ts);

        for (std::size_t i = 0; i < ps.size(); ++i)
            ck.tensors.emplace_back(ps[i].name, ps[i].value);
        ck.config_echo = ar_echo(P, eta_d, eta_o, beta, ds, ts, fr);
    }

    Eigen::MatrixXd ttps(1, 1);
    ttps(0, 0) = res.ttps;
    ck.tensors.emplace_back("stat.ttps", ttps);

    fs::create_directories(out_dir);
    save_checkpoint((fs::path(out_dir) / "checkpoint.bin").string(), ck);
    write_train_log((fs::path(out_dir) / "train_log.txt").string(), res);
    write_config_echo(out_dir, "train", cfg);

    if (!res.log.empty())
        std::cout << "trained " << model << " for " << res.log.size() << " epochs; best epoch "
                  << res.best_epoch << " (val loss " << format_double(res.best_val) << "), ttps "
                  << format_double(res.ttps) << " s\n";
    else
        std::cout << "trained " << model << " for 0 epochs; checkpoint holds the initialization\n";
    return 0;
}

/// A loaded model ready to answer predictions, plus the metadata eval needs.
struct Predictor {
    std::string model;
    int P = 7;
    double ttps = -1.0;
    std::function<std::pair<Eigen::VectorXd, Eigen::MatrixXd>(int tau)> predict;
};

Predictor make_predictor(const KvConfig& cfg, const Dataset& ds) {
    std::string ckpt_path = cfg.get_str("checkpoint", "");
    std::string model = cfg.get_str("model", "");

    Checkpoint ck;
    KvConfig echo;
    bool have_ck = false;
    if (!ckpt_path.empty()) {
        ck = load_checkpoint(ckpt_path);
        echo = KvConfig::from_text(ck.config_echo);
        check_conflicts(cfg, echo);
        check_shape(echo, ds);
        if (model.empty()) model = echo.get_str("model", "");
        have_ck = true;
    }
    if (model.empty())
        throw ConfigError("set model=ha+|hat|hap or checkpoint=<file> (bgarn, ar)");

    Predictor pr;
    pr.model = model;
    if (have_ck) {
        if (const Eigen::MatrixXd* t = ck.find("stat.ttps")) pr.ttps = (*t)(0, 0);
    }
    int l = ds.spec().slots_per_day();

    if (is_ha_model(model)) {
        int def_p = have_ck ? static_cast<int>(echo.get_int("history", 7)) : 7;
        pr.P = static_cast<int>(cfg.get_int("history", def_p));
        if (pr.P < 1) throw ConfigError("history must be at least 1");
        HaMode mode = ha_mode_of(model);
        pr.predict = [&ds, l, P = pr.P, mode](int tau) {
            BaselineRef b = ha_baseline(ds.graphs(), tau - 1, l, P, mode);
            return std::make_pair(std::move(b.d), std::move(b.G));
        };
        return pr;
    }

    if (model == "ar") {
        if (!have_ck) throw ConfigError("model 'ar' needs checkpoint=<trained AR checkpoint>");
        pr.P = static_cast<int>(echo.get_int("history", 7));
        auto ps = std::make_shared<ad::ParamStore>();
        register_ar(*ps, pr.P);
        load_params(ck, *ps);
        pr.predict = [&ds, l, P = pr.P, ps](int tau) {
            BaselineRef b = ar_baseline(ds.graphs(), tau - 1, l, P, *ps);
            return std::make_pair(std::move(b.d), std::move(b.G));
        };
        return pr;
    }

    if (model == "bgarn") {
        if (!have_ck) throw ConfigError("model 'bgarn' needs checkpoint=<trained checkpoint>");
        BgarnConfig bc = bgarn_config_from(echo, ds);
        pr.P = bc.P;
        auto m = std::make_shared<BgarnModel>(bc);
        init_bgarn(*m, ck.seed);
        load_params(ck, m->ps);
        load_params(ck, m->ar_ps);
        const Eigen::MatrixXd* mean = ck.find("stat.bn.mean");
        const Eigen::MatrixXd* var = ck.find("stat.bn.var");
        if (!mean || !var || mean->size() != m->bn.running_mean.size() ||
            var->size() != m->bn.running_var.size())
            throw CompatError("checkpoint is missing batch-norm running statistics");
        m->bn.running_mean = mean->row(0);
        m->bn.running_var = var->row(0);
        pr.predict = [&ds, m](int tau) {
            ad::Tape tape;
            BgarnOutput out = bgarn_forward(tape, *m, ds, tau, false, false);
            Eigen::VectorXd d = out.d_hat.value().col(0);
            return std::make_pair(std::move(d), out.g_hat.value());
        };
        return pr;
    }

    throw ConfigError("model must be bgarn, ha+, hat, hap, or ar, got '" + model + "'");
}

const std::vector<std::string> kEvalKeys = {"checkpoint", "epsilon",     "geo_km",
                                            "out_dir",    "split_train", "split_val",
                                            "thresholds", "workspace"};

int run_eval(const CliArgs& args) {
    KvConfig cfg = load_cli_config(args, with_model_keys(kEvalKeys));
    Dataset ds = load_workspace(cfg.require_str("workspace"), cfg.get_double("geo_km", 3.6),
                                cfg.get_double("epsilon", 1e-8));
    std::string out_dir = cfg.require_str("out_dir");
    Predictor pr = make_predictor(cfg, ds);

    std::vector<double> thresholds = cfg.get_double_list("thresholds", {0.0, 3.0, 5.0});
    if (thresholds.empty()) throw ConfigError("thresholds must not be empty");
    for (double t : thresholds)
        if (t < 0) throw ConfigError("thresholds must be nonnegative");

    SplitFracs fr = split_from(cfg);
    std::vector<int> targets = truth_targets(ds, ds.spec().slots_per_day(), pr.P);
    Split split = chronological_split(targets, fr.train, fr.val);
    if (split.test.empty()) std::cerr << "warning: test split is empty\n";

    std::vector<ReportRow> rows = evaluate_targets(pr.predict, ds, split.test, thresholds);

    fs::create_directories(out_dir);
    write_report((fs::path(out_dir) / "report.txt").string(), rows, pr.ttps);
    write_config_echo(out_dir, "eval", cfg);

    std::cout << "model " << pr.model << ", " << split.test.size() << " test targets\n";
    for (const auto& r : rows) {
        std::cout << r.task << " @" << format_double(r.threshold) << ": ";
        if (r.m.defined)
            std::cout << "rmse " << format_double(r.m.rmse) << ", mape " << format_double(r.m.mape)
                      << ", mae " << format_double(r.m.mae) << " (" << r.m.count << " entries)\n";
        else
            std::cout << "undefined (no entries at threshold)\n";
    }
    return 0;
}

int run_predict(const CliArgs& args) {
    std::vector<std::string> keys = kEvalKeys;
    keys.push_back("target");
    KvConfig cfg = load_cli_config(args, with_model_keys(keys));
    Dataset ds = load_workspace(cfg.require_str("workspace"), cfg.get_double("geo_km", 3.6),
                                cfg.get_double("epsilon", 1e-8));
    std::string out_dir = cfg.require_str("out_dir");
    Predictor pr = make_predictor(cfg, ds);

    int target = static_cast<int>(cfg.get_int("target", ds.T() + 1));
    auto [d, G] = pr.predict(target);
    d = d.cwiseMax(0.0);
    G = G.cwiseMax(0.0);

    fs::create_directories(out_dir);
    std::ofstream df(fs::path(out_dir) / "demand.txt");
    if (!df) throw IoError("cannot write demand.txt in '" + out_dir + "'");
    for (int i = 0; i < d.size(); ++i) df << i << " " << format_double(d(i)) << "\n";

    std::ofstream of(fs::path(out_dir) / "od.txt");
    if (!of) throw IoError("cannot write od.txt in '" + out_dir + "'");
    for (int i = 0; i < G.rows(); ++i)
        for (int j = 0; j < G.cols(); ++j) of << i << " " << j << " " << format_double(G(i, j)) << "\n";

    write_config_echo(out_dir, "predict", cfg);
    std::cout << "model " << pr.model << ": wrote slot " << target << " predictions to '"
              << out_dir << "'\n";
    return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    try {
        CliArgs args = parse_cli(argc, argv);
        if (args.cmd == "prep") return run_prep(args);
        if (args.cmd == "synth") return run_synth(args);
        if (args.cmd == "train") return run_train(args);
        if (args.cmd == "eval") return run_eval(args);
        if (args.cmd == "predict") return run_predict(args);
        throw ConfigError("unknown command '" + args.cmd + "'\n" + kUsage);
    } catch (const CompatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const InvalidTarget& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace odp
