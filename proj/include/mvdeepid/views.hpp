#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mvdeepid {

/// Head orientation under which a subject is imaged.
enum class ViewLabel { Left, Center, Right, Up, Down };

inline constexpr std::array<ViewLabel, 5> kAllViews{
    ViewLabel::Left, ViewLabel::Center, ViewLabel::Right, ViewLabel::Up,
    ViewLabel::Down};

inline char view_code(ViewLabel v) {
  switch (v) {
    case ViewLabel::Left: return 'L';
    case ViewLabel::Center: return 'C';
    case ViewLabel::Right: return 'R';
    case ViewLabel::Up: return 'U';
    case ViewLabel::Down: return 'D';
  }
  return '?';
}

inline std::string view_name(ViewLabel v) { return std::string(1, view_code(v)); }

inline ViewLabel parse_view(std::string_view s) {
  if (s.size() == 1) {
    switch (s[0]) {
      case 'L': return ViewLabel::Left;
      case 'C': return ViewLabel::Center;
      case 'R': return ViewLabel::Right;
      case 'U': return ViewLabel::Up;
      case 'D': return ViewLabel::Down;
      default: break;
    }
  }
  throw std::invalid_argument("unknown view label '" + std::string(s) + "'");
}

inline std::size_t view_index(ViewLabel v) { return static_cast<std::size_t>(v); }

inline const std::vector<ViewLabel>& lcr_views() {
  static const std::vector<ViewLabel> v{ViewLabel::Left, ViewLabel::Center,
                                        ViewLabel::Right};
  return v;
}

inline const std::vector<ViewLabel>& ucd_views() {
  static const std::vector<ViewLabel> v{ViewLabel::Up, ViewLabel::Center,
                                        ViewLabel::Down};
  return v;
}

inline std::vector<ViewLabel> all_views() {
  return {kAllViews.begin(), kAllViews.end()};
}

/// "lcr", "ucd" or "all5".
inline std::vector<ViewLabel> parse_view_group(std::string_view s) {
  if (s == "lcr") return lcr_views();
  if (s == "ucd") return ucd_views();
  if (s == "all5") return all_views();
  throw std::invalid_argument("unknown view group '" + std::string(s) +
                              "' (expected lcr, ucd or all5)");
}

inline std::string views_string(const std::vector<ViewLabel>& views) {
  std::string s;
  for (ViewLabel v : views) s += view_code(v);
  return s;
}

}  // namespace mvdeepid
