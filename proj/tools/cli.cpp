#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "dlenergy/dataset.hpp"
#include "dlenergy/experiments.hpp"
#include "dlenergy/macs.hpp"
#include "dlenergy/predict.hpp"
#include "dlenergy/probe.hpp"
#include "dlenergy/report.hpp"
#include "dlenergy/synthetic.hpp"

namespace dlenergy {

namespace fs = std::filesystem;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    bool quiet = false;
    bool simulate = false;
};

struct Context {
    Globals g;
    std::ostream& out;
    std::ostream& err;
    Diagnostics diag;

    void progress(const std::string& line) {
        if (!g.quiet) err << line << '\n';
    }
};

std::ofstream open_output(const std::string& path, std::ios::openmode mode = std::ios::trunc) {
    if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    std::ofstream f(path, std::ios::binary | std::ios::out | mode);
    if (!f) throw IoError(fmt::format("cannot write {}", path));
    return f;
}

/// Appending writers only emit the header into a new or empty file.
bool needs_header(const std::string& path) {
    std::error_code ec;
    return !fs::exists(path, ec) || fs::file_size(path, ec) == 0;
}

std::string shape_label(const TensorShape& s) {
    return fmt::format("{}x{}x{}x{}", s.batch, s.channels, s.height, s.width);
}

std::string metrics_line(const EvalMetrics& m) {
    return fmt::format("r2={:.3f} mse={:.6g} max_error={:.6g}", m.r2, m.mse, m.max_error);
}

nlohmann::json metrics_json(const EvalMetrics& m) {
    return {{"r2", m.r2}, {"mse", m.mse}, {"max_error", m.max_error}};
}

// ---------------------------------------------------------------------------
// collect

struct CollectArgs {
    std::string kind;
    std::size_t count = 10;
    double window = 30.0;
    int repeats = 3;
    double poll = 1.0;
    std::string out;
    std::vector<std::string> from_arch;
    std::vector<std::string> archs;
    std::vector<std::int64_t> batches{1};
    double noise = 0.01;
    bool pin_cpu = false;
    int cpu = 0;
    bool all_domains = false;
    bool per_repeat = false;
};

/// Runs the kernels of every predictable layer of an architecture.
class ArchitectureWorkload final : public Workload {
public:
    ArchitectureWorkload(const std::vector<ResolvedLayer>& layers, std::uint64_t seed) {
        for (const auto& l : layers) kernels_.emplace_back(l.config, seed + l.index);
    }
    void run_pass() override {
        for (const auto& k : kernels_) {
            const auto out = k.run();
            checksum_ += out.data.empty() ? 0.0 : out.data.front();
        }
    }

private:
    std::vector<LayerKernel> kernels_;
    double checksum_ = 0.0;
};

class Collector {
public:
    Collector(Context& ctx, const CollectArgs& a) : ctx_(ctx) {
        options_.window_seconds = a.window;
        options_.repeats = a.repeats;
        options_.poll_seconds = a.poll;
        options_.pin_cpu = a.pin_cpu;
        options_.cpu = a.cpu;
        options_.all_domains = a.all_domains;
        world_.noise = a.noise;
    }

    ProbeResult layer(const LayerConfig& cfg, std::uint64_t seed) {
        if (!ctx_.g.simulate) return measure_config(cfg, options_, &ctx_.diag, seed);
        validate(cfg, true);
        auto workload = SimulatedWorkload::for_layer(machine_, world_, cfg, seed);
        auto result = simulated(workload);
        result.config = cfg;
        return result;
    }

    ProbeResult architecture(const ArchitectureSpec& arch, const std::vector<ResolvedLayer>& layers,
                             std::uint64_t seed) {
        if (!ctx_.g.simulate) {
            ArchitectureWorkload workload(layers, seed);
            return measure_workload(workload, options_, &ctx_.diag);
        }
        const double joules = world_.architecture_energy(arch);
        SimulatedWorkload workload(machine_, joules, std::max(1e-3, joules / 50.0), world_.noise, seed);
        return simulated(workload);
    }

private:
    ProbeResult simulated(Workload& workload) {
        SimulatedClock clock(machine_);
        SimulatedCounter counter(machine_);
        return measure(workload, {&counter}, clock, options_, &ctx_.diag);
    }

    Context& ctx_;
    ProbeOptions options_;
    SyntheticWorld world_;
    SimulatedMachine machine_;
};

void cmd_collect(Context& ctx, const CollectArgs& a) {
    Collector collector(ctx, a);
    Rng rng(ctx.g.seed);

    if (!a.archs.empty()) {
        std::vector<ModelWiseRecord> records;
        std::uint64_t n = 0;
        for (const auto& name : a.archs) {
            for (const auto batch : a.batches) {
                const auto arch = with_batch(load_architecture(name), batch);
                const auto layers = extract_predictable_layers(arch);
                ModelWiseRecord rec;
                rec.architecture = arch.name;
                rec.batch_size = batch;
                for (const auto& layer : layers) {
                    LayerMeasurement lm;
                    lm.layer_index = static_cast<std::int64_t>(layer.index);
                    lm.config = layer.config;
                    lm.macs = layer_macs(layer);
                    lm.energy_j = collector.layer(layer.config, ctx.g.seed + ++n).energy_per_pass_j;
                    rec.total_macs += lm.macs;
                    rec.layers.push_back(std::move(lm));
                }
                rec.total_energy_j = collector.architecture(arch, layers, ctx.g.seed + ++n).energy_per_pass_j;
                ctx.progress(fmt::format("{} batch {}: {:.6g} J per pass", rec.architecture, batch, rec.total_energy_j));
                records.push_back(std::move(rec));
            }
        }
        const bool header = needs_header(a.out);
        auto f = open_output(a.out, std::ios::app);
        write_modelwise_csv(f, records, header);
        return;
    }

    if (a.kind.empty()) throw ValidationError("collect needs --kind (layer-wise) or --arch (model-wise)");
    const auto kind = parse_layer_kind(a.kind);
    if (!is_predictable(kind)) throw ValidationError(fmt::format("{} layers are not measured", to_string(kind)));

    std::vector<LayerConfig> configs;
    RecordSource source = RecordSource::Random;
    if (!a.from_arch.empty()) {
        std::vector<ArchitectureSpec> archs;
        for (const auto& name : a.from_arch) archs.push_back(load_architecture(name));
        configs = real_architecture_configs(kind, archs, rng);
        if (configs.size() > a.count) configs.resize(a.count);
        source = RecordSource::RealArchitecture;
    } else {
        for (std::size_t i = 0; i < a.count; ++i) configs.push_back(sample_config(kind, rng));
    }

    const bool header = needs_header(a.out);
    auto f = open_output(a.out, std::ios::app);
    if (header) f << kLayerwiseHeader << '\n';
    for (std::size_t i = 0; i < configs.size(); ++i) {
        const auto result = collector.layer(configs[i], ctx.g.seed + i + 1);
        const auto records =
            a.per_repeat ? to_records(result, source) : std::vector<MeasurementRecord>{to_record(result, source)};
        write_layerwise_csv(f, records, false);
        f.flush();  // keep completed measurements if a later one fails
        ctx.progress(fmt::format("[{}/{}] {} macs={}: {:.6g} J per pass", i + 1, configs.size(), to_string(kind),
                                 records.empty() ? 0 : records.front().macs, result.energy_per_pass_j));
    }
}

// ---------------------------------------------------------------------------
// macs / train / estimate

void cmd_macs(Context& ctx, const std::string& arch_source, std::int64_t batch, bool no_bias) {
    const auto arch = with_batch(load_architecture(arch_source), batch);
    const auto m = architecture_macs(arch, !no_bias);
    ctx.out << "layer_index,module,input_shape,output_shape,macs\n";
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const auto& l = m.layers[i];
        ctx.out << fmt::format("{},{},{},{},{}\n", l.index, to_string(l.config.kind), shape_label(l.input),
                               shape_label(l.output), m.per_layer[i]);
    }
    ctx.out << fmt::format("total,,,,{}\n", m.total);
}

struct TrainArgs {
    std::string data;
    std::string out;
    int cv_folds = 10;
    std::string hardware;
    std::vector<std::string> kinds;
    std::vector<std::string> domains{"package"};
};

void cmd_train(Context& ctx, const TrainArgs& a) {
    const auto records = load_layerwise_csv(a.data, &ctx.diag);
    TrainOptions options;
    options.split.seed = ctx.g.seed;
    options.cv_folds = a.cv_folds;
    if (!a.kinds.empty()) {
        options.kinds.clear();
        for (const auto& k : a.kinds) options.kinds.push_back(parse_layer_kind(k));
    }
    options.metadata.hardware = !a.hardware.empty() ? a.hardware : ctx.g.simulate ? "simulated" : "unknown";
    options.metadata.energy_domains = a.domains;
    const auto bundle = train_default_bundle(records, options, &ctx.diag);
    save_bundle(a.out, bundle);
    for (const auto& [kind, model] : bundle.models) {
        ctx.progress(fmt::format("{}: test {}", to_string(kind), metrics_line(model.test_metrics)));
    }
}

void cmd_estimate(Context& ctx, const std::string& bundle_path, const std::string& arch_source,
                  std::optional<std::int64_t> batch, const std::string& out_path) {
    const auto bundle = load_bundle(bundle_path);
    const auto est = estimate(bundle, load_architecture(arch_source), batch, &ctx.diag);
    const auto text = to_json(est).dump(2) + "\n";
    if (out_path.empty()) {
        ctx.out << text;
    } else {
        open_output(out_path) << text;
        ctx.progress(fmt::format("{} batch {}: {:.6g} J over {} layers", est.architecture, est.batch_size,
                                 est.total_joules, est.layers.size()));
    }
}

// ---------------------------------------------------------------------------
// evaluate / experiments / report

void cmd_evaluate(Context& ctx, const std::string& bundle_path, const std::string& data, const std::string& out_dir) {
    const auto bundle = load_bundle(bundle_path);
    const auto records = load_modelwise_csv(data, &ctx.diag);
    const auto ev = evaluate_on_real(bundle, records, &ctx.diag);
    fs::create_directories(out_dir);
    {
        auto f = open_output((fs::path(out_dir) / "layer_scatter.csv").string());
        write_layer_scatter_csv(f, ev.layers);
    }
    {
        auto f = open_output((fs::path(out_dir) / "model_scatter.csv").string());
        write_model_scatter_csv(f, ev.models);
    }
    nlohmann::json doc = {{"per_kind", nlohmann::json::object()}};
    for (const auto& [kind, m] : ev.per_kind) {
        doc["per_kind"][std::string(to_string(kind))] = metrics_json(m);
        ctx.out << fmt::format("{}: {}\n", to_string(kind), metrics_line(m));
    }
    doc["overall"] = ev.overall ? metrics_json(*ev.overall) : nlohmann::json();
    open_output((fs::path(out_dir) / "metrics.json").string()) << doc.dump(2) << '\n';
    if (ev.overall) ctx.out << fmt::format("overall r2: {:.3f}\n", ev.overall->r2);
}

void cmd_ablate(Context& ctx, const std::string& data, const std::string& kind, const std::string& out,
                unsigned threads) {
    const auto records = load_layerwise_csv(data, &ctx.diag);
    SplitSpec split;
    split.seed = ctx.g.seed;
    const auto result = run_ablation(records, parse_layer_kind(kind), split, threads);
    {
        auto f = open_output(out);
        write_ablation_csv(f, result);
    }
    auto rows = result.rows;
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.r2 > b.r2; });
    const auto show = std::min<std::size_t>(3, rows.size());
    for (std::size_t i = 0; i < show; ++i) {
        ctx.out << fmt::format("best  r2={:.4f} {}\n", rows[i].r2, result.subset_name(rows[i].mask));
    }
    for (std::size_t i = rows.size() - show; i < rows.size(); ++i) {
        ctx.out << fmt::format("worst r2={:.4f} {}\n", rows[i].r2, result.subset_name(rows[i].mask));
    }
}

void cmd_feature_experiment(Context& ctx, const std::string& data, const std::string& kind, const std::string& out,
                            int cv_folds) {
    const auto records = load_layerwise_csv(data, &ctx.diag);
    ExperimentOptions options;
    options.split.seed = ctx.g.seed;
    options.cv_folds = cv_folds;
    const auto rows = run_feature_set_experiment(records, parse_layer_kind(kind), options, &ctx.diag);
    auto f = open_output(out);
    write_feature_experiment_csv(f, rows);
}

struct ReportArgs {
    std::string eval_dir;
    std::string layers;
    std::string models;
    std::string ablation;
    std::string out_dir;
};

std::ifstream open_input(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError(fmt::format("cannot read {}", path));
    return f;
}

void cmd_report(Context& ctx, ReportArgs a) {
    if (!a.eval_dir.empty()) {
        if (a.layers.empty()) a.layers = (fs::path(a.eval_dir) / "layer_scatter.csv").string();
        if (a.models.empty()) a.models = (fs::path(a.eval_dir) / "model_scatter.csv").string();
    }
    if (a.layers.empty() && a.models.empty() && a.ablation.empty()) {
        throw ValidationError("report needs --eval-dir, --layers, --models or --ablation");
    }
    std::vector<ReportArtifact> artifacts;
    if (!a.layers.empty()) {
        auto f = open_input(a.layers);
        const auto points = read_layer_scatter_csv(f);
        artifacts.push_back(layer_scatter_artifact(points));
        artifacts.push_back(contribution_artifact(points));
    }
    if (!a.models.empty()) {
        auto f = open_input(a.models);
        const auto points = read_model_scatter_csv(f);
        artifacts.push_back(model_scatter_artifact(points));
        artifacts.push_back(aggregate_artifact(points));
    }
    if (!a.ablation.empty()) {
        auto f = open_input(a.ablation);
        artifacts.push_back(ablation_artifact(read_ablation_csv(f)));
    }
    for (const auto& artifact : artifacts) {
        for (const auto& path : write_artifact(a.out_dir, artifact)) ctx.out << path.string() << '\n';
    }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Layer-wise CPU energy prediction for deep-learning architectures", "dlenergy"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Seed for sampling, splits and simulated noise");
    app.add_flag("--quiet", g.quiet, "Suppress progress and warnings");
    app.add_flag("--simulate", g.simulate, "Use the simulated machine instead of RAPL");

    CollectArgs collect;
    auto* c = app.add_subcommand("collect", "Measure layer (or whole-architecture) energies into a CSV");
    c->add_option("--kind", collect.kind, "Layer kind to sample");
    c->add_option("--count", collect.count, "Number of configurations")->check(CLI::NonNegativeNumber);
    c->add_option("--window", collect.window, "Measurement window in seconds")->check(CLI::PositiveNumber);
    c->add_option("--repeats", collect.repeats, "Repeats per configuration")->check(CLI::PositiveNumber);
    c->add_option("--poll", collect.poll, "Counter polling interval in seconds")->check(CLI::PositiveNumber);
    c->add_option("--out", collect.out, "CSV to append to")->required();
    c->add_option("--from-arch", collect.from_arch, "Take configurations from these architectures");
    c->add_option("--arch", collect.archs, "Model-wise mode: measure these architectures");
    c->add_option("--batch", collect.batches, "Batch sizes for model-wise mode");
    c->add_option("--noise", collect.noise, "Relative noise of simulated measurements")->check(CLI::NonNegativeNumber);
    c->add_flag("--pin-cpu", collect.pin_cpu, "Pin the measuring thread to one CPU");
    c->add_option("--cpu", collect.cpu, "CPU to pin to")->check(CLI::NonNegativeNumber);
    c->add_flag("--per-repeat", collect.per_repeat, "One row per repeat instead of their mean");
    c->add_flag("--all-domains", collect.all_domains, "Sum every RAPL domain, not only packages");

    std::string macs_arch;
    std::int64_t macs_batch = 1;
    bool no_bias = false;
    auto* m = app.add_subcommand("macs", "Print per-layer MAC counts as CSV");
    m->add_option("--arch", macs_arch, "Preset name, JSON file or inline JSON")->required();
    m->add_option("--batch", macs_batch)->check(CLI::PositiveNumber);
    m->add_flag("--no-bias", no_bias, "Do not count bias additions");

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Train the per-kind predictors");
    t->add_option("--data", train.data, "Layer-wise CSV")->required();
    t->add_option("--out", train.out, "Bundle JSON to write")->required();
    t->add_option("--cv-folds", train.cv_folds, "Cross-validation folds (0 disables)");
    t->add_option("--hardware", train.hardware, "Hardware tag stored in the bundle");
    t->add_option("--kinds", train.kinds, "Train only these kinds");
    t->add_option("--domains", train.domains, "Energy domains the data was measured on");

    std::string est_bundle, est_arch, est_out;
    std::optional<std::int64_t> est_batch;
    auto* e = app.add_subcommand("estimate", "Estimate the energy of an architecture");
    e->add_option("--bundle", est_bundle)->required();
    e->add_option("--arch", est_arch, "Preset name, JSON file or inline JSON")->required();
    e->add_option("--batch", est_batch)->check(CLI::PositiveNumber);
    e->add_option("--out", est_out, "JSON file (default: stdout)");

    std::string ev_bundle, ev_data, ev_out;
    auto* v = app.add_subcommand("evaluate", "Compare predictions with model-wise measurements");
    v->add_option("--bundle", ev_bundle)->required();
    v->add_option("--data", ev_data, "Model-wise CSV")->required();
    v->add_option("--out-dir", ev_out, "Directory for scatter CSVs and metrics")->required();

    std::string ab_data, ab_kind = "conv2d", ab_out;
    unsigned ab_threads = 0;
    auto* a = app.add_subcommand("ablate", "Fit every feature subset");
    a->add_option("--data", ab_data, "Layer-wise CSV")->required();
    a->add_option("--kind", ab_kind);
    a->add_option("--out", ab_out)->required();
    a->add_option("--threads", ab_threads, "Worker threads (0: all cores)");

    std::string fe_data, fe_kind, fe_out;
    int fe_folds = 10;
    auto* f = app.add_subcommand("feature-experiment", "Compare feature sets for one kind");
    f->add_option("--data", fe_data, "Layer-wise CSV")->required();
    f->add_option("--kind", fe_kind)->required();
    f->add_option("--out", fe_out)->required();
    f->add_option("--cv-folds", fe_folds);

    ReportArgs report;
    auto* r = app.add_subcommand("report", "Render CSV + SVG plots");
    r->add_option("--eval-dir", report.eval_dir, "Output directory of evaluate");
    r->add_option("--layers", report.layers, "Layer scatter CSV");
    r->add_option("--models", report.models, "Model scatter CSV");
    r->add_option("--ablation", report.ablation, "Ablation CSV");
    r->add_option("--out-dir", report.out_dir)->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& ex) {
        const int code = app.exit(ex, out, err);
        return code == 0 ? 0 : 2;
    }

    Context ctx{g, out, err, {}};
    int status = 0;
    try {
        if (c->parsed()) cmd_collect(ctx, collect);
        else if (m->parsed()) cmd_macs(ctx, macs_arch, macs_batch, no_bias);
        else if (t->parsed()) cmd_train(ctx, train);
        else if (e->parsed()) cmd_estimate(ctx, est_bundle, est_arch, est_batch, est_out);
        else if (v->parsed()) cmd_evaluate(ctx, ev_bundle, ev_data, ev_out);
        else if (a->parsed()) cmd_ablate(ctx, ab_data, ab_kind, ab_out, ab_threads);
        else if (f->parsed()) cmd_feature_experiment(ctx, fe_data, fe_kind, fe_out, fe_folds);
        else if (r->parsed()) cmd_report(ctx, report);
    } catch (const Error& ex) {
        err << ex.kind() << ": " << ex.what() << '\n';
        status = 1;
    } catch (const std::exception& ex) {
        err << "Error: " << ex.what() << '\n';
        status = 1;
    }
    if (!g.quiet) {
        for (const auto& w : ctx.diag.warnings()) err << "warning [" << to_string(w.code) << "]: " << w.message << '\n';
    }
    return status;
}

}  // namespace dlenergy
