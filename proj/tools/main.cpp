// smx: structured-matrix toolkit command line.
//
// Subcommands: audit, project, train, sweep, fit, bench.
// Exit codes: 0 ok, 2 flag/usage error, 3 malformed config or input values,
// 4 file I/O error, 5 domain/shape error from the library.

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "smx/costs.hpp"
#include "smx/mup.hpp"
#include "smx/powerlaw.hpp"
#include "smx/projection.hpp"
#include "smx/structured.hpp"
#include "smx/trainer.hpp"

namespace {

using json = nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitIo = 4;
constexpr int kExitDomain = 5;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string resolve_out(const std::string &cli_out,
                        const std::string &fallback) {
    if (!cli_out.empty()) {
        return cli_out;
    }
    const char *dir = std::getenv("SMX_OUT_DIR");
    if (dir && *dir) {
        return std::string(dir) + "/" + fallback;
    }
    return fallback;
}

void write_file(const std::string &path, const std::string &content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path + " for writing");
    }
    out << content;
    if (!out) {
        throw IoError("failed writing " + path);
    }
}

std::string read_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

smx::Family parse_family(const std::string &name) {
    auto f = smx::family_from_name(name);
    if (!f) {
        throw ConfigError("unknown family \"" + name +
                          "\" (expected dense|lowrank|conv|kron|monarch|tt|"
                          "btt)");
    }
    return *f;
}

std::vector<std::string> split_csv_list(const std::string &text) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(text);
    while (std::getline(ss, cur, ',')) {
        if (!cur.empty()) {
            out.push_back(cur);
        }
    }
    return out;
}

std::vector<std::int64_t> parse_int_list(const std::string &text,
                                         const char *what) {
    std::vector<std::int64_t> out;
    for (const auto &tok : split_csv_list(text)) {
        try {
            out.push_back(std::stoll(tok));
        } catch (const std::exception &) {
            throw ConfigError(std::string("bad ") + what + " value \"" + tok +
                              "\"");
        }
    }
    if (out.empty()) {
        throw ConfigError(std::string("empty ") + what + " list");
    }
    return out;
}

bool parse_switch(const std::string &value, const char *flag) {
    if (value == "on") {
        return true;
    }
    if (value == "off") {
        return false;
    }
    throw ConfigError(std::string(flag) + " expects on|off, got \"" + value +
                      "\"");
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// audit
// ---------------------------------------------------------------------------

struct AuditArgs {
    std::string families = "all";
    std::string dims = "64";
    int cores = 2;
    std::int64_t rank = 1;
    std::int64_t blocks = 4;
    std::int64_t kernel = 5;
    bool double_flops = false;
    std::string out;
};

int run_audit(const AuditArgs &a) {
    std::vector<smx::Family> fams;
    if (a.families == "all") {
        fams = {smx::Family::Dense,       smx::Family::LowRank,
                smx::Family::Convolution, smx::Family::Kronecker,
                smx::Family::Monarch,     smx::Family::TensorTrain,
                smx::Family::BlockTensorTrain};
    } else {
        for (const auto &name : split_csv_list(a.families)) {
            fams.push_back(parse_family(name));
        }
    }
    const auto dims = parse_int_list(a.dims, "--d");
    std::string csv = smx::CostReport::csv_header() + "\n";
    for (smx::Family f : fams) {
        for (std::int64_t d : dims) {
            auto m = smx::make_structured(
                f, d, d,
                smx::StructureOptions{a.cores, a.rank, a.blocks, a.kernel});
            csv += smx::cost(m).csv_row(a.double_flops) + "\n";
        }
    }
    if (a.out.empty()) {
        std::fputs(csv.c_str(), stdout);
    } else {
        write_file(a.out, csv);
        std::printf("wrote %s\n", a.out.c_str());
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// project
// ---------------------------------------------------------------------------

struct ProjectArgs {
    std::string in;
    std::string out;
    std::string report;
    int cores = 2;
    std::int64_t rank = 1;
};

smx::DenseTensor load_dense(const std::string &path) {
    const std::string text = read_file(path);
    if (path.size() > 5 && path.substr(path.size() - 5) == ".json") {
        auto m = smx::structured_from_json(text);
        return smx::materialize(m, m.rows() * m.cols());
    }
    std::vector<double> data;
    std::int64_t rows = 0, cols = -1;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty() || line == "\r") {
            continue;
        }
        std::vector<double> row;
        std::istringstream cells(line);
        std::string cell;
        while (std::getline(cells, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception &) {
                throw ConfigError("bad matrix cell \"" + cell + "\" in " +
                                  path);
            }
        }
        if (cols < 0) {
            cols = static_cast<std::int64_t>(row.size());
        } else if (cols != static_cast<std::int64_t>(row.size())) {
            throw ConfigError("ragged csv matrix in " + path);
        }
        data.insert(data.end(), row.begin(), row.end());
        rows += 1;
    }
    if (rows == 0) {
        throw ConfigError("empty matrix in " + path);
    }
    return smx::DenseTensor({rows, cols}, std::move(data));
}

int run_project(const ProjectArgs &a) {
    auto dense = load_dense(a.in);
    const auto out_fac = smx::balanced_factorization(dense.extent(0), a.cores);
    const auto in_fac = smx::balanced_factorization(dense.extent(1), a.cores);
    const auto bounds = smx::btt_rank_bounds(out_fac.factors, in_fac.factors);
    std::vector<std::int64_t> ranks;
    for (std::int64_t b : bounds) {
        ranks.push_back(std::clamp<std::int64_t>(a.rank, 1, b));
    }
    auto [btt, residual] =
        smx::project_btt_recursive(dense, out_fac, in_fac, ranks);
    const double denom = smx::frobenius_norm(dense);
    const double rel = denom > 0.0 ? residual / denom : 0.0;

    const std::string out = resolve_out(a.out, "projected.json");
    write_file(out, smx::to_json_string(btt, 2));

    if (!a.report.empty()) {
        json rep;
        rep["input"] = a.in;
        rep["cores"] = a.cores;
        rep["ranks"] = ranks;
        rep["residual"] = residual;
        rep["relative_residual"] = rel;
        rep["out_factors"] = out_fac.factors;
        rep["in_factors"] = in_fac.factors;
        write_file(a.report, rep.dump(2));
    }
    std::printf("projected %" PRId64 " x %" PRId64
                " matrix onto btt: residual %.6e (relative %.6e) -> %s\n",
                dense.extent(0), dense.extent(1), residual, rel, out.c_str());
    return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string family = "dense";
    std::int64_t d = 64;
    int depth = 2;
    std::int64_t input_dim = 32;
    std::int64_t classes = 8;
    int expansion = 4;
    int cores = 2;
    std::int64_t rank = 1;
    std::int64_t blocks = 4;
    std::int64_t kernel = 5;
    std::string optimizer = "adam";
    double base_lr = 3e-3;
    std::int64_t base_width = 64;
    std::string structure_aware = "on";
    std::string weight_norm = "off";
    std::string cosine = "off";
    double input_lr_mult = 1.0;
    int steps = 200;
    std::int64_t batch = 128;
    std::int64_t dataset = 2048;
    std::int64_t probe = 256;
    double separation = 3.0;
    std::uint64_t seed = 0;
    std::string out;
};

smx::TrainConfig to_config(const TrainArgs &a) {
    smx::TrainConfig cfg;
    cfg.family = parse_family(a.family);
    cfg.width = a.d;
    cfg.depth = a.depth;
    cfg.input_dim = a.input_dim;
    cfg.num_classes = a.classes;
    cfg.expansion = a.expansion;
    cfg.structure = smx::StructureOptions{a.cores, a.rank, a.blocks, a.kernel};
    if (a.optimizer != "sgd" && a.optimizer != "adam") {
        throw ConfigError("--optimizer expects adam|sgd");
    }
    cfg.optimizer =
        a.optimizer == "sgd" ? smx::Optimizer::Sgd : smx::Optimizer::Adam;
    cfg.base_lr = a.base_lr;
    cfg.base_width = a.base_width;
    cfg.structure_aware = parse_switch(a.structure_aware, "--structure-aware");
    cfg.weight_norm = parse_switch(a.weight_norm, "--weight-norm");
    cfg.cosine_decay = parse_switch(a.cosine, "--cosine");
    cfg.input_lr_mult = a.input_lr_mult;
    cfg.steps = a.steps;
    cfg.batch = a.batch;
    cfg.dataset_size = a.dataset;
    cfg.probe_size = a.probe;
    cfg.class_separation = a.separation;
    cfg.seed = a.seed;
    if (cfg.family == smx::Family::Convolution) {
        cfg.input_dim = cfg.width;
        cfg.expansion = 1;
    }
    return cfg;
}

json config_json(const smx::TrainConfig &cfg) {
    json j;
    j["family"] = smx::family_name(cfg.family);
    j["width"] = cfg.width;
    j["depth"] = cfg.depth;
    j["input_dim"] = cfg.input_dim;
    j["num_classes"] = cfg.num_classes;
    j["expansion"] = cfg.expansion;
    j["cores"] = cfg.structure.cores;
    j["rank"] = cfg.structure.rank;
    j["blocks"] = cfg.structure.blocks;
    j["kernel"] = cfg.structure.kernel;
    j["optimizer"] = cfg.optimizer == smx::Optimizer::Adam ? "adam" : "sgd";
    j["base_lr"] = cfg.base_lr;
    j["base_width"] = cfg.base_width;
    j["structure_aware"] = cfg.structure_aware;
    j["weight_norm"] = cfg.weight_norm;
    j["cosine_decay"] = cfg.cosine_decay;
    j["input_lr_mult"] = cfg.input_lr_mult;
    j["steps"] = cfg.steps;
    j["batch"] = cfg.batch;
    j["dataset_size"] = cfg.dataset_size;
    j["probe_size"] = cfg.probe_size;
    j["class_separation"] = cfg.class_separation;
    j["seed"] = cfg.seed;
    return j;
}

int run_train(const TrainArgs &a) {
    auto cfg = to_config(a);
    auto res = smx::run_training(cfg);
    const std::string base = resolve_out(a.out, "train_run");
    write_file(base + ".csv", smx::train_records_csv(res.records));
    write_file(base + ".config.json", config_json(cfg).dump(2));
    std::printf("%s: %d steps, final loss %.6g%s -> %s.csv\n",
                smx::family_name(cfg.family),
                static_cast<int>(res.records.size()), res.final_loss,
                res.diverged ? " (diverged)" : "", base.c_str());
    return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepArgs {
    TrainArgs train;
    std::string widths = "16,64,256";
    bool coordinate_check = false;
    double synthetic_loss = 0.0; // >0: skip training, emit E = C^-alpha
    std::string out;
};

long long model_compute(const smx::TrainConfig &cfg) {
    auto model = smx::build_model(cfg);
    long long total = smx::cost(model.embed.matrix).flops;
    for (const auto &blk : model.blocks) {
        total += smx::cost(blk.w1.matrix).flops;
        total += smx::cost(blk.w2.matrix).flops;
    }
    total += smx::cost(model.head.matrix).flops;
    return total;
}

long long model_params(const smx::TrainConfig &cfg) {
    auto model = smx::build_model(cfg);
    long long total = smx::cost(model.embed.matrix).params;
    for (const auto &blk : model.blocks) {
        total += smx::cost(blk.w1.matrix).params;
        total += smx::cost(blk.w2.matrix).params;
    }
    total += smx::cost(model.head.matrix).params;
    return total;
}

int run_sweep(const SweepArgs &a) {
    auto base = to_config(a.train);
    const auto widths = parse_int_list(a.widths, "--widths");
    std::string csv;
    if (a.coordinate_check) {
        csv = "family,width,structure_aware,mean_delta_h_rms,diverged\n";
        auto rows = smx::coordinate_check(base.family, widths, base.steps,
                                          base.structure_aware, base);
        for (const auto &row : rows) {
            csv += std::string(smx::family_name(base.family)) + "," +
                   std::to_string(row.width) + "," +
                   (base.structure_aware ? "on" : "off") + "," +
                   fmt_double(row.mean_delta_h_rms) + "," +
                   (row.diverged ? "1" : "0") + "\n";
        }
    } else {
        csv = "family,width,compute,params,error\n";
        smx::Rng noise(base.seed ^ 0x5eedULL);
        for (std::int64_t w : widths) {
            smx::TrainConfig cfg = base;
            cfg.width = w;
            if (cfg.family == smx::Family::Convolution) {
                cfg.input_dim = w;
                cfg.expansion = 1;
            }
            const long long compute = model_compute(cfg);
            const long long params = model_params(cfg);
            double error;
            if (a.synthetic_loss > 0.0) {
                error =
                    std::pow(static_cast<double>(compute), -a.synthetic_loss) *
                    std::exp(noise.normal(0.0, 0.05));
            } else {
                auto res = smx::run_training(cfg);
                error = res.final_loss;
            }
            csv += std::string(smx::family_name(cfg.family)) + "," +
                   std::to_string(w) + "," + std::to_string(compute) + "," +
                   std::to_string(params) + "," + fmt_double(error) + "\n";
        }
    }
    const std::string out = resolve_out(
        a.out, a.coordinate_check ? "coordinate_check.csv" : "sweep.csv");
    write_file(out, csv);
    std::printf("wrote %s\n", out.c_str());
    return kExitOk;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct FitArgs {
    std::string in;
    std::string xcol = "compute";
    std::string ycol = "error";
    std::string out;
};

int run_fit(const FitArgs &a) {
    const std::string text = read_file(a.in);
    std::istringstream lines(text);
    std::string header;
    if (!std::getline(lines, header)) {
        throw ConfigError("empty csv " + a.in);
    }
    while (!header.empty() && (header.back() == '\r' || header.back() == '\n')) {
        header.pop_back();
    }
    const auto cols = split_csv_list(header);
    std::ptrdiff_t xi = -1, yi = -1;
    for (std::size_t i = 0; i < cols.size(); ++i) {
        if (cols[i] == a.xcol) {
            xi = static_cast<std::ptrdiff_t>(i);
        }
        if (cols[i] == a.ycol) {
            yi = static_cast<std::ptrdiff_t>(i);
        }
    }
    if (xi < 0 || yi < 0) {
        throw ConfigError("csv header lacks columns \"" + a.xcol + "\"/\"" +
                          a.ycol + "\": " + header);
    }
    std::vector<std::pair<double, double>> pts;
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty() || line == "\r") {
            continue;
        }
        const auto cells = split_csv_list(line);
        if (static_cast<std::ptrdiff_t>(cells.size()) <= std::max(xi, yi)) {
            throw ConfigError("short csv row: " + line);
        }
        try {
            pts.emplace_back(std::stod(cells[static_cast<std::size_t>(xi)]),
                             std::stod(cells[static_cast<std::size_t>(yi)]));
        } catch (const std::exception &) {
            throw ConfigError("bad csv row: " + line);
        }
    }
    auto fit = smx::fit_power_law(pts);
    json j;
    j["alpha"] = fit.alpha;
    j["amplitude"] = fit.amplitude;
    j["alpha_stderr"] = fit.alpha_stderr;
    j["n_points"] = fit.n_points;
    if (!a.out.empty()) {
        write_file(a.out, j.dump(2));
    }
    std::printf("alpha %.12g stderr %.6g amplitude %.12g n %d\n", fit.alpha,
                fit.alpha_stderr, fit.amplitude, fit.n_points);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchArgs {
    std::string families = "dense,monarch,btt";
    std::string sizes = "256,1024";
    int repeats = 20;
    int cores = 2;
    std::int64_t rank = 1;
    std::int64_t blocks = 4;
    std::int64_t kernel = 5;
    std::uint64_t seed = 7;
    std::string out;
};

int run_bench(const BenchArgs &a) {
    struct Row {
        std::string family;
        std::int64_t d;
        long long flops;
        long long median_ns;
    };
    std::vector<Row> rows;
    const auto sizes = parse_int_list(a.sizes, "--sizes");
    for (const auto &name : split_csv_list(a.families)) {
        const smx::Family f = parse_family(name);
        for (std::int64_t d : sizes) {
            auto m = smx::make_structured(
                f, d, d,
                smx::StructureOptions{a.cores, a.rank, a.blocks, a.kernel});
            auto cores = smx::core_tensors(m);
            for (std::size_t i = 0; i < cores.size(); ++i) {
                *cores[i] = smx::gaussian(cores[i]->shape(), 0.0, 0.02,
                                          a.seed + 31 * i);
            }
            auto x = smx::gaussian({d, 1}, 0.0, 1.0, a.seed ^ 0x77);
            (void)smx::structured_apply(m, x); // warmup
            std::vector<long long> times;
            for (int rep = 0; rep < std::max(1, a.repeats); ++rep) {
                const auto t0 = std::chrono::steady_clock::now();
                auto y = smx::structured_apply(m, x);
                const auto t1 = std::chrono::steady_clock::now();
                times.push_back(
                    std::chrono::duration_cast<std::chrono::nanoseconds>(t1 -
                                                                          t0)
                        .count());
                if (y.size() != d) {
                    throw ConfigError("bench: unexpected output size");
                }
            }
            std::sort(times.begin(), times.end());
            rows.push_back(
                {name, d, smx::cost(m).flops, times[times.size() / 2]});
        }
    }
    std::sort(rows.begin(), rows.end(), [](const Row &x, const Row &y) {
        return x.family != y.family ? x.family < y.family : x.flops < y.flops;
    });
    std::string csv = "family,d,flops,median_ns\n";
    for (const auto &r : rows) {
        csv += r.family + "," + std::to_string(r.d) + "," +
               std::to_string(r.flops) + "," + std::to_string(r.median_ns) +
               "\n";
    }
    if (a.out.empty()) {
        std::fputs(csv.c_str(), stdout);
    } else {
        write_file(a.out, csv);
        std::printf("wrote %s\n", a.out.c_str());
    }
    return kExitOk;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"structured-matrix toolkit"};
    app.require_subcommand(1);

    AuditArgs audit;
    auto *cmd_audit =
        app.add_subcommand("audit", "print cost reports for a config grid");
    cmd_audit->add_option("--family", audit.families,
                          "family name, csv list, or 'all'");
    cmd_audit->add_option("--d", audit.dims, "dimension or csv list");
    cmd_audit->add_option("--cores", audit.cores, "tt/btt cores");
    cmd_audit->add_option("--rank", audit.rank, "lowrank/tt/btt rank");
    cmd_audit->add_option("--blocks", audit.blocks, "monarch blocks");
    cmd_audit->add_option("--kernel", audit.kernel, "convolution taps");
    cmd_audit->add_flag("--double-flops", audit.double_flops,
                        "report 2 FLOPs per MAC");
    cmd_audit->add_option("--out", audit.out, "csv output path");

    ProjectArgs project;
    auto *cmd_project = app.add_subcommand(
        "project", "project a dense matrix onto a block tensor train");
    cmd_project->add_option("--in", project.in, "dense matrix (.csv or .json)")
        ->required();
    cmd_project->add_option("--cores", project.cores, "number of btt cores");
    cmd_project->add_option("--rank", project.rank,
                            "target rank (clipped per position)");
    cmd_project->add_option("--out", project.out, "structure json path");
    cmd_project->add_option("--report", project.report,
                            "residual report json path");

    TrainArgs train;
    auto *cmd_train = app.add_subcommand("train", "run one training job");
    auto add_train_opts = [](CLI::App *cmd, TrainArgs &t) {
        cmd->add_option("--family", t.family, "layer family");
        cmd->add_option("--d", t.d, "model width");
        cmd->add_option("--depth", t.depth, "residual blocks");
        cmd->add_option("--input-dim", t.input_dim, "input features");
        cmd->add_option("--classes", t.classes, "output classes");
        cmd->add_option("--expansion", t.expansion, "block hidden blowup");
        cmd->add_option("--cores", t.cores, "tt/btt cores");
        cmd->add_option("--rank", t.rank, "lowrank/tt/btt rank");
        cmd->add_option("--blocks", t.blocks, "monarch blocks");
        cmd->add_option("--kernel", t.kernel, "convolution taps");
        cmd->add_option("--optimizer", t.optimizer, "adam|sgd");
        cmd->add_option("--base-lr", t.base_lr, "base learning rate");
        cmd->add_option("--base-width", t.base_width, "base width d0");
        cmd->add_option("--structure-aware", t.structure_aware, "on|off");
        cmd->add_option("--weight-norm", t.weight_norm, "on|off");
        cmd->add_option("--cosine", t.cosine, "cosine decay on|off");
        cmd->add_option("--input-lr-mult", t.input_lr_mult,
                        "embed lr multiplier");
        cmd->add_option("--steps", t.steps, "optimizer steps");
        cmd->add_option("--batch", t.batch, "minibatch size");
        cmd->add_option("--dataset", t.dataset, "synthetic dataset size");
        cmd->add_option("--probe", t.probe, "probe batch size");
        cmd->add_option("--separation", t.separation, "class separation");
        cmd->add_option("--seed", t.seed, "rng seed");
    };
    add_train_opts(cmd_train, train);
    cmd_train->add_option("--out", train.out, "output prefix");

    SweepArgs sweep;
    auto *cmd_sweep = app.add_subcommand(
        "sweep", "train across widths (scaling grid or coordinate check)");
    add_train_opts(cmd_sweep, sweep.train);
    cmd_sweep->add_option("--widths", sweep.widths, "csv width list");
    cmd_sweep->add_flag("--coordinate-check", sweep.coordinate_check,
                        "measure feature-update rms across widths");
    cmd_sweep->add_option("--synthetic-loss", sweep.synthetic_loss,
                          "skip training; emit errors from C^-alpha "
                          "(pipeline test mode)");
    cmd_sweep->add_option("--out", sweep.out, "csv output path");

    FitArgs fit;
    auto *cmd_fit =
        app.add_subcommand("fit", "fit a power law E = A C^-alpha to a csv");
    cmd_fit->add_option("csv", fit.in, "input csv")->required();
    cmd_fit->add_option("--xcol", fit.xcol, "compute column name");
    cmd_fit->add_option("--ycol", fit.ycol, "error column name");
    cmd_fit->add_option("--out", fit.out, "fit json path");

    BenchArgs bench;
    auto *cmd_bench = app.add_subcommand(
        "bench", "time structured mvms and report flops vs wall time");
    cmd_bench->add_option("--families", bench.families, "csv family list");
    cmd_bench->add_option("--sizes", bench.sizes, "csv dimension list");
    cmd_bench->add_option("--repeats", bench.repeats, "timed repetitions");
    cmd_bench->add_option("--cores", bench.cores, "tt/btt cores");
    cmd_bench->add_option("--rank", bench.rank, "lowrank/tt/btt rank");
    cmd_bench->add_option("--blocks", bench.blocks, "monarch blocks");
    cmd_bench->add_option("--kernel", bench.kernel, "convolution taps");
    cmd_bench->add_option("--seed", bench.seed, "rng seed");
    cmd_bench->add_option("--out", bench.out, "csv output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (cmd_audit->parsed()) {
            return run_audit(audit);
        }
        if (cmd_project->parsed()) {
            return run_project(project);
        }
        if (cmd_train->parsed()) {
            return run_train(train);
        }
        if (cmd_sweep->parsed()) {
            return run_sweep(sweep);
        }
        if (cmd_fit->parsed()) {
            return run_fit(fit);
        }
        if (cmd_bench->parsed()) {
            return run_bench(bench);
        }
    } catch (const ConfigError &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const IoError &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const smx::DomainError &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDomain;
    } catch (const smx::DimensionError &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDomain;
    } catch (const nlohmann::json::exception &e) {
        std::fprintf(stderr, "error: malformed json: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return kExitUsage;
}
