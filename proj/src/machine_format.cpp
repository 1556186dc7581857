#include "medsearch/machine_format.hpp"

#include <cstdio>

#include "medsearch/errors.hpp"

namespace medsearch {

void MachineDoc::add(std::string key, std::string value) {
    entries_.emplace_back(std::move(key), std::move(value));
}

void MachineDoc::add_number(std::string key, double value) {
    entries_.emplace_back(std::move(key), format_number(value));
}

void MachineDoc::add_integer(std::string key, long long value) {
    entries_.emplace_back(std::move(key), std::to_string(value));
}

std::optional<std::string> MachineDoc::get(std::string_view key) const {
    for (const auto& [k, v] : entries_) {
        if (k == key) return v;
    }
    return std::nullopt;
}

std::string MachineDoc::to_string() const {
    std::string out;
    for (const auto& [k, v] : entries_) {
        out += k;
        out += '\t';
        out += v;
        out += '\n';
    }
    return out;
}

MachineDoc MachineDoc::parse(std::string_view text) {
    MachineDoc doc;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string_view::npos) {
            raise(ErrorCode::ParseError, "machine format line without tab: " + std::string(line));
        }
        doc.add(std::string(line.substr(0, tab)), std::string(line.substr(tab + 1)));
    }
    return doc;
}

std::string MachineDoc::format_number(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", value);
    return buf;
}

} // namespace medsearch
