#include "dlenergy/probe.hpp"

#include <sched.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include <fmt/format.h>

#include "dlenergy/macs.hpp"

namespace dlenergy {

namespace fs = std::filesystem;

std::uint64_t energy_delta(std::uint64_t before, std::uint64_t after, std::uint64_t max_range) {
    if (max_range == 0) throw RaplReadError("counter range is zero");
    before %= max_range;
    after %= max_range;
    return after >= before ? after - before : max_range - before + after;
}

// ---------------------------------------------------------------------------
// Powercap

namespace {

std::optional<std::string> read_line(const fs::path& path) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    std::string line;
    if (!std::getline(in, line)) return std::nullopt;
    while (!line.empty() && (line.back() == '\n' || line.back() == '\r' || line.back() == ' ')) line.pop_back();
    return line;
}

std::optional<std::uint64_t> read_u64(const fs::path& path) {
    const auto line = read_line(path);
    if (!line || line->empty()) return std::nullopt;
    std::uint64_t value = 0;
    for (const char c : *line) {
        if (c < '0' || c > '9') return std::nullopt;
        if (__builtin_mul_overflow(value, 10u, &value) || __builtin_add_overflow(value, c - '0', &value)) {
            return std::nullopt;
        }
    }
    return value;
}

}  // namespace

fs::path powercap_root() {
    if (const char* env = std::getenv("DLENERGY_POWERCAP_ROOT"); env && *env) return env;
    return "/sys/class/powercap";
}

std::vector<RaplDomain> discover_rapl_domains(const fs::path& root, bool all_domains) {
    std::error_code ec;
    if (!fs::is_directory(root, ec)) {
        throw RaplUnavailable(fmt::format("no powercap interface at {}", root.string()));
    }
    std::vector<RaplDomain> out;
    std::vector<std::string> unreadable;
    for (const auto& entry : fs::directory_iterator(root, ec)) {
        const auto dir = entry.path().filename().string();
        // Top-level zones only ("intel-rapl:0", not "intel-rapl:0:1").
        if (dir.rfind("intel-rapl:", 0) != 0 || std::count(dir.begin(), dir.end(), ':') != 1) continue;
        const auto name = read_line(entry.path() / "name");
        if (!name) continue;
        if (!all_domains && name->rfind("package", 0) != 0) continue;
        const auto range = read_u64(entry.path() / "max_energy_range_uj");
        if (!range || *range == 0 || !read_u64(entry.path() / "energy_uj")) {
            unreadable.push_back(dir);
            continue;
        }
        out.push_back({*name, entry.path() / "energy_uj", *range});
    }
    if (out.empty()) {
        throw RaplUnavailable(
            unreadable.empty()
                ? fmt::format("no RAPL package domains under {}", root.string())
                : fmt::format("RAPL counters under {} are not readable (permission denied?)", root.string()));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.counter_path < b.counter_path; });
    return out;
}

std::uint64_t PowercapCounter::read_uj() {
    const auto v = read_u64(domain_.counter_path);
    if (!v) throw RaplReadError(fmt::format("failed to read {}", domain_.counter_path.string()));
    return *v;
}

double SteadyClock::now_seconds() {
    using namespace std::chrono;
    return duration<double>(steady_clock::now().time_since_epoch()).count();
}

void KernelWorkload::run_pass() {
    const auto out = kernel_.run();
    checksum_ += out.data.empty() ? 0.0 : out.data.front();
}

// ---------------------------------------------------------------------------
// Simulation

void SimulatedMachine::advance(double seconds, double joules) {
    if (!(seconds >= 0.0) || !(joules >= 0.0)) throw ValidationError("simulated time and energy must not decrease");
    now_ns_ += static_cast<std::uint64_t>(std::llround(seconds * 1e9));
    remainder_uj_ += joules * 1e6;
    const double whole = std::floor(remainder_uj_ + 1e-9);
    energy_uj_ += static_cast<std::uint64_t>(whole);
    remainder_uj_ -= whole;
}

std::uint64_t SimulatedCounter::read_uj() {
    const auto index = reads_++;
    if (failing_reads.count(index)) throw RaplReadError(fmt::format("simulated read {} failed", index));
    return machine_.counter_uj();
}

SimulatedWorkload SimulatedWorkload::for_layer(SimulatedMachine& machine, const SyntheticWorld& world,
                                               const LayerConfig& config, std::uint64_t seed) {
    const double joules = world.true_energy(config, config_macs(config));
    constexpr double kNominalWatts = 50.0;
    return SimulatedWorkload(machine, joules, std::max(1e-3, joules / kNominalWatts), world.noise, seed);
}

void SimulatedWorkload::prepare() { scale_ = noise_ == 0.0 ? 1.0 : std::max(0.0, 1.0 + noise_ * rng_.normal()); }

void SimulatedWorkload::run_pass() { machine_.advance(seconds_, joules_ * scale_); }

// ---------------------------------------------------------------------------
// Protocol

namespace {

std::atomic<bool> g_measuring{false};

class CpuPin {
public:
    CpuPin(bool enabled, int cpu) {
        if (!enabled) return;
        if (sched_getaffinity(0, sizeof(saved_), &saved_) != 0) return;
        cpu_set_t set;
        CPU_ZERO(&set);
        CPU_SET(cpu, &set);
        active_ = sched_setaffinity(0, sizeof(set), &set) == 0;
    }
    ~CpuPin() {
        if (active_) sched_setaffinity(0, sizeof(saved_), &saved_);
    }
    bool active() const { return active_; }

private:
    cpu_set_t saved_{};
    bool active_ = false;
};

}  // namespace

MeasurementGuard::MeasurementGuard() {
    bool expected = false;
    if (!g_measuring.compare_exchange_strong(expected, true)) {
        throw ConcurrentMeasurement("another measurement is already running in this process");
    }
}

MeasurementGuard::~MeasurementGuard() { g_measuring.store(false); }

ProbeResult measure(Workload& workload, const std::vector<CounterSource*>& counters, Clock& clock,
                    const ProbeOptions& options, Diagnostics* diag) {
    if (counters.empty()) throw RaplUnavailable("no energy counters to read");
    if (options.repeats < 1) throw ValidationError("repeats must be at least 1");
    if (!(options.window_seconds > 0.0)) throw ValidationError("window must be positive");
    MeasurementGuard guard;

    ProbeResult result;
    result.window_seconds = options.window_seconds;
    for (int r = 1; r <= options.repeats; ++r) {
        workload.prepare();
        try {
            std::vector<std::uint64_t> last(counters.size());
            for (std::size_t i = 0; i < counters.size(); ++i) last[i] = counters[i]->read_uj();
            std::uint64_t total_uj = 0;
            const auto poll = [&] {
                for (std::size_t i = 0; i < counters.size(); ++i) {
                    const auto now = counters[i]->read_uj();
                    total_uj += energy_delta(last[i], now, counters[i]->max_range_uj());
                    last[i] = now;
                }
            };

            const double start = clock.now_seconds();
            double last_poll = start;
            double now = start;
            std::int64_t passes = 0;
            do {
                workload.run_pass();
                ++passes;
                now = clock.now_seconds();
                if (passes == 1 && now - start >= options.window_seconds) {
                    result.window_extended = true;
                    warn(diag, WarningCode::WindowExtended,
                         fmt::format("repeat {}: one pass took {:.3f} s, longer than the {} s window", r, now - start,
                                     options.window_seconds));
                }
                if (now - last_poll >= options.poll_seconds) {
                    poll();
                    last_poll = now;
                }
            } while (now - start < options.window_seconds);
            poll();

            RepeatResult rep;
            rep.repeat = r;
            rep.passes = passes;
            rep.elapsed_seconds = now - start;
            rep.energy_j = static_cast<double>(total_uj) / 1e6;
            // One rounding: integer microjoules over an exact pass count.
            rep.energy_per_pass_j = static_cast<double>(total_uj) / (1e6 * static_cast<double>(passes));
            result.repeats.push_back(rep);
        } catch (const RaplReadError& e) {
            warn(diag, WarningCode::RepeatFailed, fmt::format("repeat {} dropped: {}", r, e.what()));
        }
    }
    if (result.repeats.empty()) {
        throw AllRepeatsFailed(fmt::format("all {} repeats failed to read the energy counters", options.repeats));
    }
    double per_pass_sum = 0.0;
    for (const auto& rep : result.repeats) {
        result.passes_completed += rep.passes;
        result.energy_total_j += rep.energy_j;
        per_pass_sum += rep.energy_per_pass_j;
    }
    result.energy_per_pass_j = per_pass_sum / static_cast<double>(result.repeats.size());
    return result;
}

ProbeResult measure_workload(Workload& workload, const ProbeOptions& options, Diagnostics* diag) {
    const auto domains = discover_rapl_domains(powercap_root(), options.all_domains);
    std::vector<std::unique_ptr<CounterSource>> owned;
    std::vector<CounterSource*> counters;
    for (const auto& d : domains) {
        owned.push_back(std::make_unique<PowercapCounter>(d));
        counters.push_back(owned.back().get());
    }
    double load[1] = {0.0};
    if (getloadavg(load, 1) == 1 && load[0] > options.max_load) {
        warn(diag, WarningCode::HighLoad,
             fmt::format("one-minute load average is {:.2f}; measurements may include other processes", load[0]));
    }
    const CpuPin pin(options.pin_cpu, options.cpu);
    SteadyClock clock;
    return measure(workload, counters, clock, options, diag);
}

ProbeResult measure_config(const LayerConfig& config, const ProbeOptions& options, Diagnostics* diag,
                           std::uint64_t seed) {
    validate(config, true);
    KernelWorkload workload(config, seed);
    auto result = measure_workload(workload, options, diag);
    result.config = config;
    return result;
}

MeasurementRecord to_record(const ProbeResult& result, RecordSource source) {
    MeasurementRecord rec;
    rec.config = result.config;
    rec.macs = config_macs(result.config);
    rec.cpu_energy_j = result.energy_per_pass_j;
    rec.source = source;
    return rec;
}

std::vector<MeasurementRecord> to_records(const ProbeResult& result, RecordSource source) {
    std::vector<MeasurementRecord> out;
    const auto macs = config_macs(result.config);
    for (const auto& rep : result.repeats) {
        MeasurementRecord rec;
        rec.config = result.config;
        rec.macs = macs;
        rec.cpu_energy_j = rep.energy_per_pass_j;
        rec.repeat = rep.repeat;
        rec.source = source;
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace dlenergy
