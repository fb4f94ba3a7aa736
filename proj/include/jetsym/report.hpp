#pragma once

#include <cstdio>
#include <string>
#include <vector>

namespace jetsym {

/// Line-oriented key=value report. Entries keep insertion order so that a
/// fixed pipeline over fixed inputs emits byte-identical text.
struct Report {
    std::vector<std::pair<std::string, std::string>> entries;
    bool passed = true;

    static std::string fmt(double x) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g", x);
        return buf;
    }

    void add(const std::string& key, const std::string& value) {
        entries.emplace_back(key, value);
    }
    void add(const std::string& key, const char* value) { add(key, std::string(value)); }
    void add(const std::string& key, double value) { add(key, fmt(value)); }
    void add(const std::string& key, int value) { add(key, std::to_string(value)); }
    void verdict(const std::string& key, bool ok) {
        add(key, ok ? "pass" : "fail");
        if (!ok) passed = false;
    }

    const std::string* find(const std::string& key) const {
        for (auto& [k, v] : entries)
            if (k == key) return &v;
        return nullptr;
    }

    /// Machine format: one `key = value` per line, LF endings.
    std::string machine() const {
        std::string out;
        for (auto& [k, v] : entries) {
            out += k;
            out += " = ";
            out += v;
            out += '\n';
        }
        return out;
    }

    /// Text format: same content with a trailing status line.
    std::string text() const {
        return machine() + (passed ? "status = pass\n" : "status = fail\n");
    }
};

} // namespace jetsym
