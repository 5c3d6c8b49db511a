#include "loopy/duration.hpp"

#include "loopy/errors.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>

namespace loopy {
namespace {

std::int64_t parse_int(std::string_view text, std::string_view context) {
    std::int64_t v = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc{} || ptr != end) throw DomainError("invalid " + std::string(context) + ": '" + std::string(text) + "'");
    return v;
}

}  // namespace

std::int64_t parse_duration(std::string_view text) {
    if (text.empty()) throw DomainError("empty duration");
    std::int64_t unit = 1;
    std::string_view digits = text;
    switch (text.back()) {
        case 's': unit = 1; break;
        case 'm': unit = 60; break;
        case 'h': unit = 3600; break;
        case 'd': unit = 86400; break;
        case 'w': unit = 7 * 86400; break;
        default: unit = 0; break;
    }
    if (unit != 0) digits.remove_suffix(1);
    else unit = 1;
    const std::int64_t n = parse_int(digits, "duration");
    if (n <= 0) throw DomainError("duration must be positive: '" + std::string(text) + "'");
    return n * unit;
}

std::string format_duration(std::int64_t seconds) {
    if (seconds > 0 && seconds % 86400 == 0) return std::to_string(seconds / 86400) + "d";
    if (seconds > 0 && seconds % 3600 == 0) return std::to_string(seconds / 3600) + "h";
    if (seconds > 0 && seconds % 60 == 0) return std::to_string(seconds / 60) + "m";
    return std::to_string(seconds) + "s";
}

std::int64_t parse_timestamp(std::string_view text) {
    if (text.empty()) throw DomainError("empty timestamp");
    if (text.find('-') == std::string_view::npos || text.front() == '-') return parse_int(text, "timestamp");

    if (text.size() < 10 || text[4] != '-' || text[7] != '-') throw DomainError("invalid date: '" + std::string(text) + "'");
    using namespace std::chrono;
    const int y = static_cast<int>(parse_int(text.substr(0, 4), "year"));
    const unsigned mo = static_cast<unsigned>(parse_int(text.substr(5, 2), "month"));
    const unsigned d = static_cast<unsigned>(parse_int(text.substr(8, 2), "day"));
    const year_month_day ymd{year{y}, month{mo}, day{d}};
    if (!ymd.ok()) throw DomainError("invalid date: '" + std::string(text) + "'");
    std::int64_t secs = duration_cast<seconds>(sys_days{ymd}.time_since_epoch()).count();

    if (text.size() > 10) {
        std::string_view rest = text.substr(10);
        if (rest.front() != 'T' && rest.front() != ' ') throw DomainError("invalid datetime: '" + std::string(text) + "'");
        rest.remove_prefix(1);
        if (!rest.empty() && rest.back() == 'Z') rest.remove_suffix(1);
        if (rest.size() != 8 || rest[2] != ':' || rest[5] != ':') throw DomainError("invalid time: '" + std::string(text) + "'");
        secs += parse_int(rest.substr(0, 2), "hour") * 3600 + parse_int(rest.substr(3, 2), "minute") * 60 +
                parse_int(rest.substr(6, 2), "second");
    }
    return secs;
}

std::string format_timestamp(std::int64_t seconds) {
    using namespace std::chrono;
    const sys_seconds tp{std::chrono::seconds{seconds}};
    const auto day_point = floor<days>(tp);
    const year_month_day ymd{day_point};
    const hh_mm_ss hms{tp - day_point};
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                  static_cast<long>(hms.seconds().count()));
    return buf;
}

}  // namespace loopy
