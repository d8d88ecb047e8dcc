#include "dlenergy/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

#include "dlenergy/csv.hpp"

namespace dlenergy {

namespace {

std::string opt_field(const std::optional<std::int64_t>& value) {
    return value ? std::to_string(*value) : std::string{};
}

struct ConfigColumns {
    std::size_t image, kernel, in, out, stride, padding;
};

ConfigColumns config_columns(const csv::Table& table) {
    return {table.require_column("image_size"), table.require_column("kernel_size"),
            table.require_column("in_channels"), table.require_column("out_channels"),
            table.require_column("stride"), table.require_column("padding")};
}

void read_config_fields(LayerConfig& cfg, const std::vector<std::string>& row, const ConfigColumns& cols,
                        std::size_t line) {
    cfg.image_size = csv::parse_int(row[cols.image], line, "image_size");
    cfg.kernel_size = csv::parse_int(row[cols.kernel], line, "kernel_size");
    cfg.in_channels = csv::parse_int(row[cols.in], line, "in_channels");
    cfg.out_channels = csv::parse_int(row[cols.out], line, "out_channels");
    cfg.stride = csv::parse_int(row[cols.stride], line, "stride");
    cfg.padding = csv::parse_int(row[cols.padding], line, "padding");
}

LayerKind parse_kind_at(std::string_view text, std::size_t line) {
    try {
        return parse_layer_kind(text);
    } catch (const ParseError& e) {
        throw ParseError(fmt::format("row {}: {}", line, e.what()));
    }
}

void validate_at(const LayerConfig& cfg, std::size_t line) {
    try {
        validate(cfg, true);
    } catch (const ValidationError& e) {
        throw ValidationError(fmt::format("row {}: {}", line, e.what()));
    }
}

// Energy is erroneous when missing, negative or non-finite.
bool usable_energy(const std::optional<double>& energy) {
    return energy && std::isfinite(*energy) && *energy >= 0.0;
}

void check_macs(const LayerConfig& cfg, std::optional<std::int64_t> stored, MacCount& out,
                std::size_t line, Diagnostics* diag) {
    const auto recomputed = config_macs(cfg);
    if (!stored) {
        out = recomputed;
        return;
    }
    if (*stored < 0) throw ParseError(fmt::format("row {}: negative MAC count", line));
    out = static_cast<MacCount>(*stored);
    if (out != recomputed) {
        warn(diag, WarningCode::Consistency,
             fmt::format("row {}: stored macs {} differ from recomputed {}", line, out, recomputed));
    }
}

std::uint64_t fnv1a(std::string_view data, std::uint64_t hash = 0xcbf29ce484222325ull) {
    for (const unsigned char c : data) {
        hash ^= c;
        hash *= 0x100000001b3ull;
    }
    return hash;
}

}  // namespace

std::string_view to_string(RecordSource source) noexcept {
    return source == RecordSource::Random ? "random" : "real_architecture";
}

RecordSource parse_record_source(std::string_view text) {
    if (text == "random" || text.empty()) return RecordSource::Random;
    if (text == "real_architecture" || text == "real") return RecordSource::RealArchitecture;
    throw ParseError(fmt::format("unknown record source '{}'", text));
}

SampleRanges default_ranges(LayerKind kind) {
    SampleRanges r;
    switch (kind) {
        case LayerKind::Conv2d:
        case LayerKind::MaxPool2d:
            r.batch_size = {1, 256};
            break;
        case LayerKind::Linear:
            r.batch_size = {1, 512};
            r.in_channels = {1, 5000};
            r.out_channels = {1, 5000};
            break;
        case LayerKind::ReLU:
        case LayerKind::Sigmoid:
        case LayerKind::Tanh:
        case LayerKind::Softmax:
            r.batch_size = {1, 512};
            r.in_channels = {50'000, 5'000'000};
            break;
        default:
            throw ValidationError(fmt::format("{} is not a measurable layer kind", to_string(kind)));
    }
    return r;
}

LayerConfig sample_config(LayerKind kind, Rng& rng, const SampleRanges& ranges) {
    if (!is_predictable(kind)) {
        throw ValidationError(fmt::format("{} is not a measurable layer kind", to_string(kind)));
    }
    auto draw = [&rng](const IntRange& range) { return rng.uniform_int(range.lo, range.hi); };
    for (int attempt = 0; attempt < kSampleRetryCap; ++attempt) {
        LayerConfig cfg;
        cfg.kind = kind;
        cfg.batch_size = draw(ranges.batch_size);
        switch (kind) {
            case LayerKind::Conv2d:
                cfg.image_size = draw(ranges.image_size);
                cfg.kernel_size = draw(ranges.kernel_size);
                cfg.in_channels = draw(ranges.in_channels);
                cfg.out_channels = draw(ranges.out_channels);
                cfg.stride = draw(ranges.stride);
                cfg.padding = draw(ranges.padding);
                break;
            case LayerKind::MaxPool2d:
                cfg.image_size = draw(ranges.image_size);
                cfg.kernel_size = draw(ranges.kernel_size);
                // the pooled channel count; pooling cannot change it
                cfg.in_channels = draw(ranges.out_channels);
                cfg.stride = draw(ranges.stride);
                cfg.padding = draw(ranges.padding);
                break;
            case LayerKind::Linear:
                cfg.in_channels = draw(ranges.in_channels);
                cfg.out_channels = draw(ranges.out_channels);
                break;
            default:
                cfg.in_channels = draw(ranges.in_channels);
                break;
        }
        try {
            validate(cfg, true);
            return cfg;
        } catch (const ValidationError&) {
        }
    }
    throw RetryExhausted(fmt::format("no valid {} config after {} draws", to_string(kind), kSampleRetryCap));
}

LayerConfig sample_config(LayerKind kind, Rng& rng) {
    return sample_config(kind, rng, default_ranges(kind));
}

LayerConfig sample_config(LayerKind kind, std::uint64_t seed) {
    Rng rng(seed);
    return sample_config(kind, rng);
}

std::vector<LayerConfig> real_architecture_configs(LayerKind kind, const std::vector<ArchitectureSpec>& archs,
                                                   Rng& rng) {
    std::vector<LayerConfig> out;
    std::set<std::string> seen;
    for (const auto& arch : archs) {
        for (const auto& layer : extract_predictable_layers(with_batch(arch, 1))) {
            if (layer.config.kind != kind) continue;
            if (!seen.insert(config_key(layer.config)).second) continue;
            const auto batch = rng.uniform_int(1, 256);
            auto cfg = layer.config;
            cfg.batch_size = batch;
            out.push_back(cfg);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<MeasurementRecord> read_layerwise_csv(std::istream& in, Diagnostics* diag) {
    const auto table = csv::read(in);
    const auto c_module = table.require_column("module");
    const auto c_batch = table.require_column("batch_size");
    const auto cols = config_columns(table);
    const auto c_macs = table.require_column("macs");
    const auto c_energy = table.require_column("cpu_energy_j");
    const auto c_repeat = table.column("repeat");
    const auto c_source = table.column("source");

    std::vector<MeasurementRecord> records;
    records.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto line = table.line_numbers[r];
        MeasurementRecord rec;
        rec.config.kind = parse_kind_at(row[c_module], line);
        rec.config.batch_size = csv::parse_int(row[c_batch], line, "batch_size");
        read_config_fields(rec.config, row, cols, line);
        validate_at(rec.config, line);

        const auto energy = csv::parse_double(row[c_energy], line, "cpu_energy_j");
        if (!usable_energy(energy)) {
            warn(diag, WarningCode::ErroneousRow,
                 fmt::format("row {}: dropped, cpu_energy_j is '{}'", line, row[c_energy]));
            continue;
        }
        rec.cpu_energy_j = *energy;
        check_macs(rec.config, csv::parse_int(row[c_macs], line, "macs"), rec.macs, line, diag);
        if (c_repeat) rec.repeat = csv::parse_int(row[*c_repeat], line, "repeat").value_or(1);
        if (c_source) {
            try {
                rec.source = parse_record_source(row[*c_source]);
            } catch (const ParseError& e) {
                throw ParseError(fmt::format("row {}: {}", line, e.what()));
            }
        }
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<MeasurementRecord> load_layerwise_csv(const std::string& path, Diagnostics* diag) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open '{}'", path));
    return read_layerwise_csv(in, diag);
}

std::string layerwise_row(const MeasurementRecord& rec) {
    const auto& c = rec.config;
    return fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}", to_string(c.kind), opt_field(c.batch_size),
                       opt_field(c.image_size), opt_field(c.kernel_size), opt_field(c.in_channels),
                       opt_field(c.out_channels), opt_field(c.stride), opt_field(c.padding), rec.macs,
                       csv::format_double(rec.cpu_energy_j), rec.repeat, to_string(rec.source));
}

void write_layerwise_csv(std::ostream& out, const std::vector<MeasurementRecord>& records, bool with_header) {
    if (with_header) out << kLayerwiseHeader << '\n';
    for (const auto& rec : records) out << layerwise_row(rec) << '\n';
}

std::vector<ModelWiseRecord> read_modelwise_csv(std::istream& in, Diagnostics* diag) {
    const auto table = csv::read(in);
    const auto c_arch = table.require_column("architecture");
    const auto c_batch = table.require_column("batch_size");
    const auto c_type = table.require_column("row_type");
    const auto c_index = table.require_column("layer_index");
    const auto c_module = table.require_column("module");
    const auto cols = config_columns(table);
    const auto c_macs = table.require_column("macs");
    const auto c_energy = table.require_column("cpu_energy_j");

    std::vector<ModelWiseRecord> records;
    bool current_valid = false;  // false after a dropped total row
    bool have_current = false;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto line = table.line_numbers[r];
        const auto batch = csv::parse_int(row[c_batch], line, "batch_size");
        if (!batch || *batch < 1) throw ParseError(fmt::format("row {}: batch_size must be >= 1", line));
        const auto energy = csv::parse_double(row[c_energy], line, "cpu_energy_j");
        const auto macs = csv::parse_int(row[c_macs], line, "macs");
        const auto& type = row[c_type];

        if (type == "total") {
            have_current = true;
            current_valid = usable_energy(energy);
            if (!current_valid) {
                warn(diag, WarningCode::ErroneousRow,
                     fmt::format("row {}: dropped {} measurement, cpu_energy_j is '{}'", line, row[c_arch],
                                 row[c_energy]));
                continue;
            }
            ModelWiseRecord rec;
            rec.architecture = row[c_arch];
            rec.batch_size = *batch;
            rec.total_energy_j = *energy;
            rec.total_macs = macs ? static_cast<MacCount>(*macs) : 0;
            records.push_back(std::move(rec));
        } else if (type == "layer") {
            if (!have_current) throw ParseError(fmt::format("row {}: layer row before any total row", line));
            if (!current_valid) continue;
            auto& rec = records.back();
            if (row[c_arch] != rec.architecture || *batch != rec.batch_size) {
                throw ParseError(fmt::format("row {}: layer row does not match its total row ({}, batch {})", line,
                                             rec.architecture, rec.batch_size));
            }
            LayerMeasurement lm;
            lm.layer_index = csv::parse_int(row[c_index], line, "layer_index").value_or(-1);
            if (lm.layer_index < 0) throw ParseError(fmt::format("row {}: layer_index required", line));
            if (!rec.layers.empty() && lm.layer_index <= rec.layers.back().layer_index) {
                throw ParseError(fmt::format("row {}: layer_index must increase within a measurement", line));
            }
            lm.config.kind = parse_kind_at(row[c_module], line);
            lm.config.batch_size = *batch;
            if (is_predictable(lm.config.kind)) {
                read_config_fields(lm.config, row, cols, line);
                validate_at(lm.config, line);
            }
            if (!usable_energy(energy)) {
                warn(diag, WarningCode::ErroneousRow,
                     fmt::format("row {}: dropped layer measurement, cpu_energy_j is '{}'", line, row[c_energy]));
                continue;
            }
            lm.energy_j = *energy;
            if (is_predictable(lm.config.kind)) {
                check_macs(lm.config, macs, lm.macs, line, diag);
            } else {
                lm.macs = macs ? static_cast<MacCount>(*macs) : 0;
            }
            rec.layers.push_back(std::move(lm));
        } else {
            throw ParseError(fmt::format("row {}: row_type must be 'total' or 'layer', got '{}'", line, type));
        }
    }
    return records;
}

std::vector<ModelWiseRecord> load_modelwise_csv(const std::string& path, Diagnostics* diag) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open '{}'", path));
    return read_modelwise_csv(in, diag);
}

void write_modelwise_csv(std::ostream& out, const std::vector<ModelWiseRecord>& records, bool with_header) {
    if (with_header) out << kModelwiseHeader << '\n';
    for (const auto& rec : records) {
        out << fmt::format("{},{},total,,,,,,,,,{},{}\n", rec.architecture, rec.batch_size, rec.total_macs,
                           csv::format_double(rec.total_energy_j));
        for (const auto& lm : rec.layers) {
            const auto& c = lm.config;
            out << fmt::format("{},{},layer,{},{},{},{},{},{},{},{},{},{}\n", rec.architecture, rec.batch_size,
                               lm.layer_index, to_string(c.kind), opt_field(c.image_size),
                               opt_field(c.kernel_size), opt_field(c.in_channels), opt_field(c.out_channels),
                               opt_field(c.stride), opt_field(c.padding), lm.macs,
                               csv::format_double(lm.energy_j));
        }
    }
}

// ---------------------------------------------------------------------------

std::string config_key(const LayerConfig& c) {
    return fmt::format("{}|{}|{}|{}|{}|{}|{}|{}|{}", to_string(c.kind), opt_field(c.batch_size),
                       opt_field(c.image_size), opt_field(c.kernel_size), opt_field(c.in_channels),
                       opt_field(c.out_channels), opt_field(c.stride), opt_field(c.padding),
                       opt_field(c.output_size));
}

std::vector<std::vector<std::size_t>> group_by_config(const std::vector<MeasurementRecord>& records) {
    std::vector<std::vector<std::size_t>> groups;
    std::unordered_map<std::string, std::size_t> slot;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto [it, inserted] = slot.try_emplace(config_key(records[i].config), groups.size());
        if (inserted) groups.emplace_back();
        groups[it->second].push_back(i);
    }
    return groups;
}

std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& fractions) {
    std::vector<std::size_t> counts(fractions.size());
    std::vector<double> remainders(fractions.size());
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        const double quota = fractions[i] * static_cast<double>(total);
        // guard against 0.7 * 10 evaluating to 6.999...
        const double floored = std::floor(quota + 1e-9);
        counts[i] = static_cast<std::size_t>(floored);
        remainders[i] = quota - floored;
        assigned += counts[i];
    }
    std::vector<std::size_t> order(fractions.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
    for (std::size_t i = 0; assigned < total && i < order.size(); ++i, ++assigned) ++counts[order[i]];
    return counts;
}

SplitIndices split_indices(const std::vector<MeasurementRecord>& records, const SplitSpec& spec) {
    const double sum = spec.train_fraction + spec.val_fraction + spec.test_fraction;
    if (std::abs(sum - 1.0) > 1e-9 || spec.train_fraction < 0 || spec.val_fraction < 0 || spec.test_fraction < 0) {
        throw ValidationError("split fractions must be non-negative and sum to 1");
    }
    auto groups = group_by_config(records);
    if (records.size() < 10 || groups.size() < 10) {
        throw TooFewRecords(fmt::format("need at least 10 distinct configurations to split, got {} ({} records)",
                                        groups.size(), records.size()));
    }
    Rng rng(spec.seed);
    rng.shuffle(groups);
    const auto counts = apportion(groups.size(), {spec.train_fraction, spec.val_fraction, spec.test_fraction});

    SplitIndices out;
    std::vector<std::size_t>* parts[] = {&out.train, &out.val, &out.test};
    std::size_t g = 0;
    for (std::size_t p = 0; p < 3; ++p) {
        for (std::size_t n = 0; n < counts[p]; ++n, ++g) {
            parts[p]->insert(parts[p]->end(), groups[g].begin(), groups[g].end());
        }
        std::sort(parts[p]->begin(), parts[p]->end());
    }
    return out;
}

DatasetSplit split(const std::vector<MeasurementRecord>& records, const SplitSpec& spec) {
    const auto idx = split_indices(records, spec);
    auto gather = [&](const std::vector<std::size_t>& ids) {
        std::vector<MeasurementRecord> out;
        out.reserve(ids.size());
        for (auto i : ids) out.push_back(records[i]);
        return out;
    };
    return {gather(idx.train), gather(idx.val), gather(idx.test)};
}

std::vector<MeasurementRecord> merge_real_configs(const std::vector<MeasurementRecord>& train,
                                                  const std::vector<MeasurementRecord>& real) {
    std::vector<MeasurementRecord> out;
    out.reserve(train.size() + real.size());
    out.insert(out.end(), train.begin(), train.end());
    out.insert(out.end(), real.begin(), real.end());
    if (!out.empty()) {
        const auto kind = out.front().kind();
        for (const auto& rec : out) {
            if (rec.kind() != kind) {
                throw KindMismatch(fmt::format("cannot merge {} records into a {} training set", to_string(rec.kind()),
                                               to_string(kind)));
            }
        }
    }
    return out;
}

std::vector<MeasurementRecord> filter_kind(const std::vector<MeasurementRecord>& records, LayerKind kind) {
    std::vector<MeasurementRecord> out;
    std::copy_if(records.begin(), records.end(), std::back_inserter(out),
                 [kind](const MeasurementRecord& r) { return r.kind() == kind; });
    return out;
}

std::string dataset_fingerprint(const std::vector<MeasurementRecord>& records) {
    std::uint64_t hash = fnv1a(kLayerwiseHeader);
    for (const auto& rec : records) hash = fnv1a(layerwise_row(rec) + "\n", hash);
    return fmt::format("fnv1a64:{:016x}", hash);
}

}  // namespace dlenergy
