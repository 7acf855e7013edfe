#pragma once

// Simulated reviewing clinician with hidden category weights.

#include <array>
#include <cstdint>
#include <random>
#include <string>

#include <json.hpp>

#include "vdss/contracts.hpp"

namespace vdss {

struct ClinicianProfile {
    enum class Acceptance { deterministic, logistic };

    std::string clinician_id = "clinician-1";
    std::array<double, kArmCount> weights{};  // hidden w*
    Acceptance acceptance = Acceptance::deterministic;
    double tau = 0.5;
    double gamma0 = 0.0;
    double gamma1 = 1.0;
    /// Relative frequency of each rejection reason, in ReasonCategory order.
    std::array<double, enum_count<ReasonCategory>()> reason_weights{0.05, 0.05, 0.5, 0.2, 0.2};
    std::uint64_t seed = 1;

    /// Throws ConfigError unless some weight is nonzero, tau is in (0,1] and
    /// the reason weights have positive mass.
    void validate() const;

    /// Favors assertive, target-driven steps within the current mode.
    static ClinicianProfile default_profile(std::uint64_t seed = 1);
    static ClinicianProfile from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// Mean hidden weight over the proposal's tags (0 for an empty tag set).
double alignment(const ClinicianProfile& profile, const std::vector<Category>& tags);

class SimulatedClinician {
public:
    explicit SimulatedClinician(ClinicianProfile profile);

    /// Throws ContractError when the safety report does not pass; the engine
    /// never presents such proposals.
    ClinicianFeedback review(const Proposal& proposal, const SafetyReport& safety);

    const ClinicianProfile& profile() const { return profile_; }

private:
    ClinicianProfile profile_;
    std::mt19937_64 rng_;
    double u01();
};

}  // namespace vdss
