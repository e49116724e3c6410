#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace tfm {

struct CategoryInfo {
    std::string_view id;
    std::string_view label;
};

/// The fourteen safety categories, in benchmark listing order.
inline constexpr std::array<CategoryInfo, 14> kSafetyCategories{{
    {"pornography", "Pornography"},
    {"borderline_pornography", "Borderline Pornography"},
    {"violence", "Violence"},
    {"gore", "Gore"},
    {"disturbing_content", "Disturbing Content"},
    {"public_figures", "Public Figures"},
    {"discrimination", "Discrimination"},
    {"political_sensitivity", "Political Sensitivity"},
    {"copyright", "Copyright"},
    {"illegal_activities", "Illegal Activities"},
    {"misinformation", "Misinformation"},
    {"sequential_action", "Sequential Action"},
    {"dynamic_variation", "Dynamic Variation"},
    {"coherent_contextual", "Coherent Contextual"},
}};

/// Synthetic category used by shipped fixtures; sorts after the real ones.
inline constexpr std::string_view kFixtureCategory = "fixture";

bool is_known_category(std::string_view id);
/// Display label; the id itself for the fixture category.
std::string category_label(std::string_view id);
/// Position in listing order; fixture and unknown ids sort last.
std::size_t category_rank(std::string_view id);

}  // namespace tfm
