#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "jetsym/errors.hpp"

namespace jetsym {

/// One `[name]` block of a problem file: ordered key/value entries, values
/// kept as raw strings until a context is available to parse them.
struct ProblemSection {
    std::string name;
    std::vector<std::pair<std::string, std::string>> entries;

    const std::string* find(const std::string& key) const {
        for (auto& [k, v] : entries)
            if (k == key) return &v;
        return nullptr;
    }
    std::string require(const std::string& key) const {
        if (auto* v = find(key)) return *v;
        throw ProblemFileError("section [" + name + "] is missing key '" + key + "'");
    }
    std::string get_or(const std::string& key, const std::string& fallback) const {
        if (auto* v = find(key)) return *v;
        return fallback;
    }
    std::vector<std::string> values(const std::string& key) const {
        std::vector<std::string> out;
        for (auto& [k, v] : entries)
            if (k == key) out.push_back(v);
        return out;
    }
};

/// Parsed problem file. `[instance]` headers split the file into shared
/// sections followed by per-instance overrides: an instance sees its own
/// sections first and falls back to the shared ones.
struct ProblemFile {
    std::string name; // from [meta] name, or empty
    std::vector<ProblemSection> shared;
    std::vector<std::vector<ProblemSection>> instances; // may be empty

    int instance_count() const { return instances.empty() ? 1 : static_cast<int>(instances.size()); }

    const ProblemSection* section(const std::string& sname, int instance = 0) const {
        if (!instances.empty()) {
            for (auto& s : instances[instance])
                if (s.name == sname) return &s;
        }
        for (auto& s : shared)
            if (s.name == sname) return &s;
        return nullptr;
    }
    const ProblemSection& require_section(const std::string& sname, int instance = 0) const {
        if (auto* s = section(sname, instance)) return *s;
        throw ProblemFileError("missing section [" + sname + "]" +
                               (name.empty() ? "" : " in problem " + name));
    }
    /// Shared sections whose name starts with the given prefix, in file order.
    std::vector<const ProblemSection*> sections_with_prefix(const std::string& prefix) const {
        std::vector<const ProblemSection*> out;
        for (auto& s : shared)
            if (s.name.rfind(prefix, 0) == 0) out.push_back(&s);
        return out;
    }
};

namespace detail {

inline std::string strip(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace detail

/// Split a comma-separated value into trimmed pieces (commas inside
/// parentheses do not split).
inline std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    int depth = 0;
    std::string cur;
    for (char c : value) {
        if (c == '(') ++depth;
        if (c == ')') --depth;
        if (c == ',' && depth == 0) {
            out.push_back(detail::strip(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    std::string last = detail::strip(cur);
    if (!last.empty()) out.push_back(last);
    return out;
}

/// Split on whitespace.
inline std::vector<std::string> split_words(const std::string& value) {
    std::vector<std::string> out;
    std::istringstream in(value);
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

inline ProblemFile parse_problem(std::istream& in, const std::string& origin = "<stream>") {
    ProblemFile pf;
    std::vector<ProblemSection>* target = &pf.shared;
    ProblemSection* current = nullptr;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::strip(line);
        if (line.empty()) continue;
        auto fail = [&](const std::string& msg) {
            throw ProblemFileError(origin + ":" + std::to_string(lineno) + ": " + msg);
        };
        if (line.front() == '[') {
            if (line.back() != ']') fail("unterminated section header");
            std::string sname = detail::strip(line.substr(1, line.size() - 2));
            if (sname.empty()) fail("empty section name");
            if (sname == "instance") {
                pf.instances.emplace_back();
                target = &pf.instances.back();
                current = nullptr;
                continue;
            }
            target->push_back(ProblemSection{sname, {}});
            current = &target->back();
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) fail("expected 'key = value'");
        if (!current) fail("entry outside of any section");
        std::string key = detail::strip(line.substr(0, eq));
        std::string value = detail::strip(line.substr(eq + 1));
        if (key.empty()) fail("empty key");
        current->entries.emplace_back(key, value);
    }
    if (auto* meta = pf.section("meta")) pf.name = meta->get_or("name", "");
    return pf;
}

inline ProblemFile load_problem(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ProblemFileError("cannot open problem file " + path);
    return parse_problem(in, path);
}

} // namespace jetsym
