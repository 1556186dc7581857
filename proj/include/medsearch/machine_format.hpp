#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace medsearch {

/// Line-oriented flat key/value document: one `key<TAB>value` pair per line.
/// This is the `--format machine` wire shape; it must survive a round-trip
/// through its own parser.
class MachineDoc {
public:
    void add(std::string key, std::string value);
    void add_number(std::string key, double value);
    void add_integer(std::string key, long long value);

    std::optional<std::string> get(std::string_view key) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

    std::string to_string() const;
    static MachineDoc parse(std::string_view text);

    /// Fixed-precision float formatting (6 decimals) so identical inputs
    /// serialize to identical bytes.
    static std::string format_number(double value);

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

} // namespace medsearch
