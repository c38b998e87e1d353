#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace ecgdig {

enum class LeadName : int { I, II, III, aVR, aVL, aVF, V1, V2, V3, V4, V5, V6 };

inline constexpr int kLeadCount = 12;

inline constexpr std::array<LeadName, kLeadCount> kAllLeads{
    LeadName::I,  LeadName::II, LeadName::III, LeadName::aVR, LeadName::aVL, LeadName::aVF,
    LeadName::V1, LeadName::V2, LeadName::V3,  LeadName::V4,  LeadName::V5,  LeadName::V6};

inline constexpr std::array<std::string_view, kLeadCount> kLeadLabels{"I",  "II", "III", "aVR", "aVL", "aVF",
                                                                       "V1", "V2", "V3",  "V4",  "V5",  "V6"};

inline std::string_view to_string(LeadName lead) { return kLeadLabels[static_cast<int>(lead)]; }

inline std::optional<LeadName> parse_lead(std::string_view text) {
    for (int i = 0; i < kLeadCount; ++i)
        if (kLeadLabels[i] == text) return static_cast<LeadName>(i);
    return std::nullopt;
}

}  // namespace ecgdig
