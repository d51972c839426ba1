#pragma once

#include <array>
#include <string>
#include <string_view>

namespace retag::lexicon {

// Club names are <place> <mascot>; each club's alias combines a place
// nickname with a mascot nickname ("ashford falcons" -> "the ashes hawks").
// The alias is never printed in a table, so producing it is knowledge the
// model has to learn rather than copy.
inline constexpr std::array<std::string_view, 10> kPlaces = {
    "ashford", "brookvale", "carlton", "dunmore", "eastwick", "fairhaven", "glenrock", "harrow", "ivydale", "kingsport"};
inline constexpr std::array<std::string_view, 10> kPlaceNicknames = {
    "ashes", "brooks", "carts", "dunes", "wicks", "havens", "glens", "arrows", "ivies", "ports"};
inline constexpr std::array<std::string_view, 10> kMascots = {
    "falcons", "lions", "rovers", "wanderers", "rangers", "eagles", "wolves", "hornets", "pilots", "tigers"};
inline constexpr std::array<std::string_view, 10> kMascotNicknames = {
    "hawks", "cats", "roamers", "drifters", "scouts", "talons", "pack", "stingers", "flyers", "stripes"};

inline constexpr std::size_t kClubCount = kPlaces.size() * kMascots.size();

inline std::string club_name(std::size_t i) {
  return std::string(kPlaces[i / kMascots.size()]) + " " + std::string(kMascots[i % kMascots.size()]);
}

inline std::string club_alias(std::size_t i) {
  return "the " + std::string(kPlaceNicknames[i / kMascots.size()]) + " " +
         std::string(kMascotNicknames[i % kMascots.size()]);
}

inline constexpr std::array<std::string_view, 12> kMonths = {"january", "february", "march",     "april",
                                                             "may",     "june",     "july",      "august",
                                                             "september", "october", "november", "december"};

}  // namespace retag::lexicon
