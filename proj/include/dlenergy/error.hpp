#pragma once

#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace dlenergy {

/// Base class for every error raised by the toolkit. The CLI maps any
/// Error to exit code 1 and prints `kind(): what()` on one line.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept { return "Error"; }
};

#define DLENERGY_DEFINE_ERROR(Name)                                      \
    class Name : public Error {                                          \
    public:                                                              \
        using Error::Error;                                              \
        const char* kind() const noexcept override { return #Name; }    \
    }

DLENERGY_DEFINE_ERROR(ShapeError);
DLENERGY_DEFINE_ERROR(ParseError);
DLENERGY_DEFINE_ERROR(ValidationError);
DLENERGY_DEFINE_ERROR(UnknownPreset);
DLENERGY_DEFINE_ERROR(OverflowError);
DLENERGY_DEFINE_ERROR(SchemaError);
DLENERGY_DEFINE_ERROR(RetryExhausted);
DLENERGY_DEFINE_ERROR(TooFewRecords);
DLENERGY_DEFINE_ERROR(KindMismatch);
DLENERGY_DEFINE_ERROR(MissingKind);
DLENERGY_DEFINE_ERROR(DegreeOutOfRange);
DLENERGY_DEFINE_ERROR(EmptyRecords);
DLENERGY_DEFINE_ERROR(UnfittedScaler);
DLENERGY_DEFINE_ERROR(ColumnMismatch);
DLENERGY_DEFINE_ERROR(NonFinite);
DLENERGY_DEFINE_ERROR(EmptyData);
DLENERGY_DEFINE_ERROR(RaplUnavailable);
DLENERGY_DEFINE_ERROR(RaplReadError);
DLENERGY_DEFINE_ERROR(AllRepeatsFailed);
DLENERGY_DEFINE_ERROR(ConcurrentMeasurement);
DLENERGY_DEFINE_ERROR(IoError);

#undef DLENERGY_DEFINE_ERROR

enum class WarningCode {
    ErroneousRow,       // dropped CSV row (negative or missing energy)
    Consistency,        // stored MACs differ from recomputed MACs
    ConstantColumn,     // feature column dropped by the z-score scaler
    Singularity,        // rank-deficient least-squares problem
    NotConverged,       // lasso hit max_iter
    Aggregation,        // per-layer sum differs from measured total by > 5%
    NegativeClamped,    // negative energy prediction clamped to zero
    RepeatFailed,       // probe repeat dropped after a counter failure
    HighLoad,           // machine not idle before a measurement
    WindowExtended,     // a single pass outlasted the measurement window
};

const char* to_string(WarningCode code) noexcept;

struct Warning {
    WarningCode code;
    std::string message;
};

/// Collects non-fatal conditions. Thread-safe so that parallel fits can
/// share one sink.
class Diagnostics {
public:
    void warn(WarningCode code, std::string message);
    std::vector<Warning> warnings() const;
    std::size_t count(WarningCode code) const;
    bool empty() const;

private:
    mutable std::mutex mutex_;
    std::vector<Warning> warnings_;
};

inline void warn(Diagnostics* diag, WarningCode code, std::string message) {
    if (diag) diag->warn(code, std::move(message));
}

}  // namespace dlenergy
