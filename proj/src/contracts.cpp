#include "vdss/contracts.hpp"

#include <algorithm>

namespace vdss {

namespace {

using StateField = std::optional<double> PatientState::*;

struct NamedField {
    std::string_view name;
    StateField member;
};

constexpr std::array<NamedField, 9> kStateFields{{
    {"spo2", &PatientState::spo2},
    {"heart_rate", &PatientState::heart_rate},
    {"map", &PatientState::map},
    {"ph", &PatientState::ph},
    {"paco2", &PatientState::paco2},
    {"pao2", &PatientState::pao2},
    {"tidal_volume_obs", &PatientState::tidal_volume_obs},
    {"resp_rate_obs", &PatientState::resp_rate_obs},
    {"weight_kg", &PatientState::weight_kg},
}};

}  // namespace

std::optional<double> PatientState::field(std::string_view name) const {
    for (const auto& f : kStateFields) {
        if (f.name == name) return this->*(f.member);
    }
    return std::nullopt;
}

const std::vector<std::string_view>& PatientState::numeric_fields() {
    static const std::vector<std::string_view> names = [] {
        std::vector<std::string_view> v;
        for (const auto& f : kStateFields) v.push_back(f.name);
        return v;
    }();
    return names;
}

bool WaveformCues::has(Pattern p) const {
    return std::find(asynchrony_patterns.begin(), asynchrony_patterns.end(), p) != asynchrony_patterns.end();
}

Severity StateSummary::max_severity() const {
    Severity s = Severity::none;
    for (const auto& a : abnormalities) s = std::max(s, a.severity);
    return s;
}

bool is_disjoint(const PreferenceSignal& s) {
    for (auto c : s.evidenced_by_accept) {
        if (std::find(s.evidenced_only_by_reject.begin(), s.evidenced_only_by_reject.end(), c) !=
            s.evidenced_only_by_reject.end())
            return false;
    }
    return true;
}

}  // namespace vdss
