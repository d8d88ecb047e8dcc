#include "dlenergy/error.hpp"

#include <algorithm>

namespace dlenergy {

const char* to_string(WarningCode code) noexcept {
    switch (code) {
        case WarningCode::ErroneousRow: return "ErroneousRow";
        case WarningCode::Consistency: return "ConsistencyWarning";
        case WarningCode::ConstantColumn: return "ConstantColumn";
        case WarningCode::Singularity: return "SingularityWarning";
        case WarningCode::NotConverged: return "NotConverged";
        case WarningCode::Aggregation: return "AggregationWarning";
        case WarningCode::NegativeClamped: return "NegativeClamped";
        case WarningCode::RepeatFailed: return "RepeatFailed";
        case WarningCode::HighLoad: return "HighLoad";
        case WarningCode::WindowExtended: return "WindowExtended";
    }
    return "Unknown";
}

void Diagnostics::warn(WarningCode code, std::string message) {
    std::lock_guard lock(mutex_);
    warnings_.push_back({code, std::move(message)});
}

std::vector<Warning> Diagnostics::warnings() const {
    std::lock_guard lock(mutex_);
    return warnings_;
}

std::size_t Diagnostics::count(WarningCode code) const {
    std::lock_guard lock(mutex_);
    return static_cast<std::size_t>(std::count_if(
        warnings_.begin(), warnings_.end(), [code](const Warning& w) { return w.code == code; }));
}

bool Diagnostics::empty() const {
    std::lock_guard lock(mutex_);
    return warnings_.empty();
}

}  // namespace dlenergy
