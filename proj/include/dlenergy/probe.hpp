#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dlenergy/arch.hpp"
#include "dlenergy/dataset.hpp"
#include "dlenergy/error.hpp"
#include "dlenergy/kernels.hpp"
#include "dlenergy/rng.hpp"
#include "dlenergy/synthetic.hpp"

namespace dlenergy {

/// Wraparound-safe counter difference: (after - before + range) mod range.
std::uint64_t energy_delta(std::uint64_t before, std::uint64_t after, std::uint64_t max_range);

/// A monotonically increasing microjoule counter that wraps at max_range.
class CounterSource {
public:
    virtual ~CounterSource() = default;
    /// Throws RaplReadError on a failed read.
    virtual std::uint64_t read_uj() = 0;
    virtual std::uint64_t max_range_uj() const = 0;
    virtual std::string name() const = 0;
};

struct RaplDomain {
    std::string name;  // e.g. "package-0"
    std::filesystem::path counter_path;
    std::uint64_t max_range_uj = 0;
};

/// Root of the powercap tree: $DLENERGY_POWERCAP_ROOT or /sys/class/powercap.
std::filesystem::path powercap_root();

/// Top-level intel-rapl domains under `root`; package domains only unless
/// `all_domains`. Throws RaplUnavailable when none are readable.
std::vector<RaplDomain> discover_rapl_domains(const std::filesystem::path& root = powercap_root(),
                                              bool all_domains = false);

class PowercapCounter final : public CounterSource {
public:
    explicit PowercapCounter(RaplDomain domain) : domain_(std::move(domain)) {}
    std::uint64_t read_uj() override;
    std::uint64_t max_range_uj() const override { return domain_.max_range_uj; }
    std::string name() const override { return domain_.name; }

private:
    RaplDomain domain_;
};

class Clock {
public:
    virtual ~Clock() = default;
    virtual double now_seconds() = 0;
};

class SteadyClock final : public Clock {
public:
    double now_seconds() override;
};

class Workload {
public:
    virtual ~Workload() = default;
    /// Called once before each repeat.
    virtual void prepare() {}
    virtual void run_pass() = 0;
};

/// Runs the naive forward kernel of one layer.
class KernelWorkload final : public Workload {
public:
    KernelWorkload(const LayerConfig& config, std::uint64_t seed) : kernel_(config, seed) {}
    void run_pass() override;
    double checksum() const { return checksum_; }

private:
    LayerKernel kernel_;
    double checksum_ = 0.0;  // keeps the work observable
};

/// A machine whose time and energy only move when a simulated pass runs.
class SimulatedMachine {
public:
    explicit SimulatedMachine(std::uint64_t max_range_uj = 262143328850ULL, std::uint64_t start_uj = 0)
        : range_(max_range_uj), energy_uj_(start_uj) {}

    /// Time is kept in integer nanoseconds and energy in integer microjoules
    /// (plus a carried sub-microjoule remainder) so simulated measurements
    /// are exact.
    void advance(double seconds, double joules);
    double now() const { return static_cast<double>(now_ns_) / 1e9; }
    std::uint64_t counter_uj() const { return energy_uj_ % range_; }
    std::uint64_t max_range_uj() const { return range_; }

private:
    std::uint64_t range_;
    std::uint64_t now_ns_ = 0;
    std::uint64_t energy_uj_ = 0;  // unwrapped
    double remainder_uj_ = 0.0;
};

class SimulatedClock final : public Clock {
public:
    explicit SimulatedClock(SimulatedMachine& machine) : machine_(machine) {}
    double now_seconds() override { return machine_.now(); }

private:
    SimulatedMachine& machine_;
};

class SimulatedCounter final : public CounterSource {
public:
    explicit SimulatedCounter(SimulatedMachine& machine, std::string name = "package-0")
        : machine_(machine), name_(std::move(name)) {}
    std::uint64_t read_uj() override;
    std::uint64_t max_range_uj() const override { return machine_.max_range_uj(); }
    std::string name() const override { return name_; }

    /// Zero-based indices of reads that throw RaplReadError.
    std::set<std::size_t> failing_reads;
    std::size_t reads() const { return reads_; }

private:
    SimulatedMachine& machine_;
    std::string name_;
    std::size_t reads_ = 0;
};

/// Each pass costs `joules_per_pass` (scaled per repeat by a noise draw)
/// and `seconds_per_pass` on the simulated machine.
class SimulatedWorkload final : public Workload {
public:
    SimulatedWorkload(SimulatedMachine& machine, double joules_per_pass, double seconds_per_pass, double noise = 0.0,
                      std::uint64_t seed = 0)
        : machine_(machine), joules_(joules_per_pass), seconds_(seconds_per_pass), noise_(noise), rng_(seed) {}

    /// Energy from `world`; duration from a nominal power draw, at least 1 ms.
    static SimulatedWorkload for_layer(SimulatedMachine& machine, const SyntheticWorld& world,
                                       const LayerConfig& config, std::uint64_t seed);

    void prepare() override;
    void run_pass() override;

private:
    SimulatedMachine& machine_;
    double joules_;
    double seconds_;
    double noise_;
    Rng rng_;
    double scale_ = 1.0;
};

struct ProbeOptions {
    double window_seconds = 30.0;
    int repeats = 3;
    double poll_seconds = 1.0;  // counters are sampled at least this often
    bool pin_cpu = false;
    int cpu = 0;
    double max_load = 1.0;  // one-minute load average above this warns
    bool all_domains = false;  // sum every top-level RAPL domain, not just packages
};

struct RepeatResult {
    int repeat = 1;  // 1-based index among attempted repeats
    std::int64_t passes = 0;
    double elapsed_seconds = 0.0;
    double energy_j = 0.0;
    double energy_per_pass_j = 0.0;
};

struct ProbeResult {
    LayerConfig config;
    double window_seconds = 0.0;
    std::vector<RepeatResult> repeats;  // surviving repeats
    std::int64_t passes_completed = 0;  // over surviving repeats
    double energy_total_j = 0.0;        // over surviving repeats
    double energy_per_pass_j = 0.0;     // mean of the per-repeat values
    bool window_extended = false;       // a single pass outlasted the window
};

/// Only one measurement may run per process; a second concurrent one
/// throws ConcurrentMeasurement.
class MeasurementGuard {
public:
    MeasurementGuard();
    ~MeasurementGuard();
    MeasurementGuard(const MeasurementGuard&) = delete;
    MeasurementGuard& operator=(const MeasurementGuard&) = delete;
};

/// The measurement protocol: per repeat, read the counters, run passes
/// until the window has elapsed (at least one), read again, and normalize
/// by the pass count. Repeats with a failed read are dropped with a
/// RepeatFailed warning; AllRepeatsFailed if none survive.
ProbeResult measure(Workload& workload, const std::vector<CounterSource*>& counters, Clock& clock,
                    const ProbeOptions& options, Diagnostics* diag = nullptr);

/// Measures an arbitrary workload on this machine's RAPL counters, with the
/// load check and optional CPU pinning.
ProbeResult measure_workload(Workload& workload, const ProbeOptions& options = {}, Diagnostics* diag = nullptr);

/// Measures `config` on this machine with the native kernels and RAPL.
ProbeResult measure_config(const LayerConfig& config, const ProbeOptions& options = {}, Diagnostics* diag = nullptr,
                           std::uint64_t seed = 0);

/// One layer-wise record holding the mean over repeats.
MeasurementRecord to_record(const ProbeResult& result, RecordSource source = RecordSource::Random);
/// One layer-wise record per surviving repeat.
std::vector<MeasurementRecord> to_records(const ProbeResult& result, RecordSource source = RecordSource::Random);

}  // namespace dlenergy
