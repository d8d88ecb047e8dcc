#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "dlenergy/arch.hpp"
#include "dlenergy/error.hpp"
#include "dlenergy/macs.hpp"
#include "dlenergy/rng.hpp"

namespace dlenergy {

enum class RecordSource { Random, RealArchitecture };

std::string_view to_string(RecordSource source) noexcept;
RecordSource parse_record_source(std::string_view text);

/// One row of the layer-wise dataset. Energy is joules per forward pass.
struct MeasurementRecord {
    LayerConfig config;
    MacCount macs = 0;
    double cpu_energy_j = 0.0;
    std::int64_t repeat = 1;
    RecordSource source = RecordSource::Random;

    LayerKind kind() const { return config.kind; }
    bool operator==(const MeasurementRecord&) const = default;
};

struct LayerMeasurement {
    std::int64_t layer_index = 0;
    LayerConfig config;
    MacCount macs = 0;
    double energy_j = 0.0;

    bool operator==(const LayerMeasurement&) const = default;
};

/// One full-architecture measurement plus the measurements of its layers.
struct ModelWiseRecord {
    std::string architecture;
    std::int64_t batch_size = 1;
    MacCount total_macs = 0;
    double total_energy_j = 0.0;
    std::vector<LayerMeasurement> layers;  // ordered by layer_index

    bool operator==(const ModelWiseRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Sampling

struct IntRange {
    std::int64_t lo = 1;
    std::int64_t hi = 1;
};

/// Inclusive sampling ranges for the fields of one layer kind. Fields that
/// do not apply to the kind are ignored.
struct SampleRanges {
    IntRange batch_size;
    IntRange image_size{4, 224};
    IntRange kernel_size{1, 11};
    IntRange in_channels{1, 512};
    IntRange out_channels{1, 512};
    IntRange stride{1, 5};
    IntRange padding{0, 3};
};

/// The data-collection ranges for each measurable kind.
SampleRanges default_ranges(LayerKind kind);

inline constexpr int kSampleRetryCap = 1000;

/// Draws every applicable field uniformly from its range, resampling until
/// the config is valid. Throws RetryExhausted after kSampleRetryCap draws.
LayerConfig sample_config(LayerKind kind, Rng& rng, const SampleRanges& ranges);
LayerConfig sample_config(LayerKind kind, Rng& rng);
LayerConfig sample_config(LayerKind kind, std::uint64_t seed);

/// Distinct `kind` layer configs found in the given architectures, each
/// with a batch size drawn from [1, 256].
std::vector<LayerConfig> real_architecture_configs(LayerKind kind,
                                                   const std::vector<ArchitectureSpec>& archs,
                                                   Rng& rng);

// ---------------------------------------------------------------------------
// CSV I/O

inline constexpr std::string_view kLayerwiseHeader =
    "module,batch_size,image_size,kernel_size,in_channels,out_channels,stride,padding,macs,"
    "cpu_energy_j,repeat,source";
inline constexpr std::string_view kModelwiseHeader =
    "architecture,batch_size,row_type,layer_index,module,image_size,kernel_size,in_channels,"
    "out_channels,stride,padding,macs,cpu_energy_j";

/// Rows with missing, negative or non-finite energy are dropped with an
/// ErroneousRow warning. A stored MAC count that disagrees with the
/// recomputed one is kept and reported as a Consistency warning; an empty
/// MAC field is filled in.
std::vector<MeasurementRecord> read_layerwise_csv(std::istream& in, Diagnostics* diag = nullptr);
std::vector<MeasurementRecord> load_layerwise_csv(const std::string& path, Diagnostics* diag = nullptr);
void write_layerwise_csv(std::ostream& out, const std::vector<MeasurementRecord>& records,
                         bool with_header = true);
std::string layerwise_row(const MeasurementRecord& record);

/// A `total` row opens a record; the `layer` rows that follow attach to it
/// and must repeat its architecture and batch size.
std::vector<ModelWiseRecord> read_modelwise_csv(std::istream& in, Diagnostics* diag = nullptr);
std::vector<ModelWiseRecord> load_modelwise_csv(const std::string& path, Diagnostics* diag = nullptr);
void write_modelwise_csv(std::ostream& out, const std::vector<ModelWiseRecord>& records,
                         bool with_header = true);

// ---------------------------------------------------------------------------
// Splitting and merging

struct SplitSpec {
    double train_fraction = 0.7;
    double val_fraction = 0.2;
    double test_fraction = 0.1;
    std::uint64_t seed = 0;
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

struct DatasetSplit {
    std::vector<MeasurementRecord> train;
    std::vector<MeasurementRecord> val;
    std::vector<MeasurementRecord> test;
};

/// Stable key identifying a configuration; repeats share a key.
std::string config_key(const LayerConfig& config);

/// Group indices by configuration, groups in order of first appearance.
std::vector<std::vector<std::size_t>> group_by_config(const std::vector<MeasurementRecord>& records);

/// Largest-remainder apportionment of `total` items over `fractions`.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& fractions);

/// Configuration-grouped split: the groups are shuffled with the seed and
/// apportioned 70/20/10. Indices inside each part keep their input order.
/// Throws TooFewRecords with fewer than 10 distinct configurations.
SplitIndices split_indices(const std::vector<MeasurementRecord>& records, const SplitSpec& spec);
DatasetSplit split(const std::vector<MeasurementRecord>& records, const SplitSpec& spec);

/// Concatenates `train` and `real`, preserving source tags. All records must
/// share one layer kind (KindMismatch otherwise).
std::vector<MeasurementRecord> merge_real_configs(const std::vector<MeasurementRecord>& train,
                                                  const std::vector<MeasurementRecord>& real);

std::vector<MeasurementRecord> filter_kind(const std::vector<MeasurementRecord>& records, LayerKind kind);

/// FNV-1a over the canonical CSV rows; recorded in bundle metadata.
std::string dataset_fingerprint(const std::vector<MeasurementRecord>& records);

}  // namespace dlenergy
