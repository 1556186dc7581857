#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace medsearch {

// ASCII-only lowercase; non-ASCII bytes (UTF-8 continuations, Cyrillic) pass
// through untouched so multilingual terms keep their byte sequences.
std::string to_lower_ascii(std::string_view s);

std::string trim(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);

// Splits on a separator but drops empty fields.
std::vector<std::string> split_nonempty(std::string_view s, char sep);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool contains_ci(std::string_view haystack, std::string_view needle);

std::string percent_encode(std::string_view s);
std::string percent_decode(std::string_view s);

// Unit-cost Levenshtein distance over bytes.
std::size_t edit_distance(std::string_view a, std::string_view b);

/// Deterministic uniform pick in [0, n). std::uniform_int_distribution is
/// implementation-defined, so fixtures and generators that must be
/// byte-stable across toolchains use this instead.
inline std::uint64_t pick(std::mt19937_64& rng, std::uint64_t n) {
    return n == 0 ? 0 : rng() % n;
}

} // namespace medsearch
