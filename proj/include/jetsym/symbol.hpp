#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>

namespace jetsym {

enum class SymKind : uint8_t { Time, Dependent, Jet, Parameter };

/// Coordinate on the jet space: t, u^a, u^a_k (k-th derivative, treated as an
/// independent coordinate), or a named parameter.
struct Symbol {
    SymKind kind = SymKind::Time;
    int index = 0; // dependent index a, 1-based
    int order = 0; // jet order k >= 1
    std::string name; // parameter name

    static Symbol time() { return Symbol{SymKind::Time, 0, 0, {}}; }
    static Symbol dep(int a) { return Symbol{SymKind::Dependent, a, 0, {}}; }
    static Symbol jet(int a, int k) {
        return k == 0 ? dep(a) : Symbol{SymKind::Jet, a, k, {}};
    }
    static Symbol param(std::string n) {
        return Symbol{SymKind::Parameter, 0, 0, std::move(n)};
    }

    bool is_jet_like() const { return kind == SymKind::Dependent || kind == SymKind::Jet; }
    /// Jet order; 0 for dependent variables, -1 for t and parameters.
    int jet_order() const {
        if (kind == SymKind::Dependent) return 0;
        if (kind == SymKind::Jet) return order;
        return -1;
    }

    friend auto operator<=>(const Symbol&, const Symbol&) = default;
};

struct SymbolHash {
    std::size_t operator()(const Symbol& s) const {
        std::size_t h = std::hash<int>()(static_cast<int>(s.kind));
        h = h * 1000003u ^ std::hash<int>()(s.index);
        h = h * 1000003u ^ std::hash<int>()(s.order);
        h = h * 1000003u ^ std::hash<std::string>()(s.name);
        return h;
    }
};

} // namespace jetsym
