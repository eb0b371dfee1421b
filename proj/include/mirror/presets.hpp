#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mirror/control.hpp"

namespace mirror {

/// Coupling weights fitted per dyad of virtual players (eta = 1e-4 for all).
struct WeightPreset {
    std::string_view name;
    CouplingWeights weights;
};

inline constexpr double kDefaultEta = 1e-4;

inline const std::array<WeightPreset, 16>& dyad_presets() {
    static const std::array<WeightPreset, 16> table{{
        {"dyad1.vp1", {0.10, 0.30, 0.60, kDefaultEta}}, {"dyad1.vp2", {0.10, 0.55, 0.35, kDefaultEta}},
        {"dyad2.vp1", {0.10, 0.35, 0.55, kDefaultEta}}, {"dyad2.vp2", {0.12, 0.45, 0.43, kDefaultEta}},
        {"dyad3.vp1", {0.15, 0.30, 0.55, kDefaultEta}}, {"dyad3.vp2", {0.10, 0.35, 0.55, kDefaultEta}},
        {"dyad4.vp1", {0.31, 0.38, 0.31, kDefaultEta}}, {"dyad4.vp2", {0.31, 0.38, 0.31, kDefaultEta}},
        {"dyad5.vp1", {0.72, 0.22, 0.06, kDefaultEta}}, {"dyad5.vp2", {0.72, 0.22, 0.06, kDefaultEta}},
        {"dyad6.vp1", {0.10, 0.60, 0.30, kDefaultEta}}, {"dyad6.vp2", {0.10, 0.28, 0.62, kDefaultEta}},
        {"dyad7.vp1", {0.10, 0.30, 0.60, kDefaultEta}}, {"dyad7.vp2", {0.10, 0.35, 0.55, kDefaultEta}},
        {"dyad8.vp1", {0.10, 0.28, 0.62, kDefaultEta}}, {"dyad8.vp2", {0.10, 0.30, 0.60, kDefaultEta}},
    }};
    return table;
}

/// Weights used by the live avatar unless a dyad preset is requested.
inline constexpr CouplingWeights kAvatarWeights{0.2, 0.4, 0.4, kDefaultEta};

/// Looks up `dyadN.vpM` or `default` (the live avatar weights).
inline std::optional<CouplingWeights> find_preset(std::string_view name) {
    if (name == "default") return kAvatarWeights;
    for (const auto& p : dyad_presets())
        if (p.name == name) return p.weights;
    return std::nullopt;
}

inline std::vector<std::string> preset_names() {
    std::vector<std::string> out{"default"};
    for (const auto& p : dyad_presets()) out.emplace_back(p.name);
    return out;
}

}  // namespace mirror
