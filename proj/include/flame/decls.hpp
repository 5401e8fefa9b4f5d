#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flame/kb.hpp"
#include "flame/property.hpp"

namespace flame {

enum class OperandKind { Input, Output, FirstColumnInput, Constant };

// How the operand's extent relates to the problem: fixed in n, growing with
// the iteration count, or scalar.
enum class ShapeRole {
    SquareFixed,       // n x n
    TallGrowing,       // n x m (Output) or the underlined member of a pair
    TallGrowingFull,   // n x (m+1), first column known, partitioned 1x3
    SmallSquareGrowing,// m x m
    TrailingGrowing,   // (m+1) x m, e.g. a growing Hessenberg factor
    VectorFixed,       // n x 1
    ScalarFixed,       // 1 x 1
};

struct OperandDecl {
    std::string name;
    OperandKind kind = OperandKind::Input;
    ShapeRole shape = ShapeRole::SquareFixed;
    std::vector<PropertyName> props;
    std::string underlined_of;       // nonempty for the last-column-omitted twin
    bool has_underlined_twin = false;

    Dims dims() const {
        SymDim n = SymDim::sym('n'), m = SymDim::sym('m');
        switch (shape) {
            case ShapeRole::SquareFixed: return {n, n};
            case ShapeRole::TallGrowing: return {n, m};
            case ShapeRole::TallGrowingFull: return {n, m.plus(1)};
            case ShapeRole::SmallSquareGrowing: return {m, m};
            case ShapeRole::TrailingGrowing: return {m.plus(1), m};
            case ShapeRole::VectorFixed: return {n, SymDim(1)};
            case ShapeRole::ScalarFixed: return {SymDim(1), SymDim(1)};
        }
        return {n, n};
    }
};

struct GuardSpec {
    enum class Form { NormLastCol, SizeBound, DiffLastCols } form = Form::NormLastCol;
    std::string operand;
    SymDim bound_rows, bound_cols;  // SizeBound only
};

struct MethodDescription {
    std::string operation;
    std::vector<OperandDecl> operands;
    std::vector<Property> term_properties;  // precondition properties over expressions
    std::vector<Equation> post;             // postcondition equations, guard excluded
    std::optional<GuardSpec> guard;
    std::vector<InferenceRule> extra_rules;

    const OperandDecl* find(const std::string& name) const {
        for (auto& o : operands)
            if (o.name == name) return &o;
        return nullptr;
    }

    OperandDecl* find(const std::string& name) {
        for (auto& o : operands)
            if (o.name == name) return &o;
        return nullptr;
    }

    // Operand-level symbolic dims for the derivation phase.
    Algebra algebra() const {
        Algebra a;
        for (auto& o : operands) {
            auto d = o.dims();
            a.declare(o.name, "", d.first, d.second);
            if (std::find(o.props.begin(), o.props.end(), PropertyName::Symmetric) != o.props.end() ||
                std::find(o.props.begin(), o.props.end(), PropertyName::SPD) != o.props.end())
                a.symmetric_atoms.insert(o.name);
        }
        return a;
    }

    // The recursive function is determined by the precondition alone: inputs
    // are the Input operands plus the first columns of non-underlined
    // FirstColumnInput operands; outputs are all non-Input, non-underlined
    // operands in declaration order.
    std::vector<const OperandDecl*> function_inputs() const {
        std::vector<const OperandDecl*> v;
        for (auto& o : operands)
            if (o.kind == OperandKind::Input) v.push_back(&o);
        return v;
    }
    std::vector<const OperandDecl*> first_column_inputs() const {
        std::vector<const OperandDecl*> v;
        for (auto& o : operands)
            if (o.kind == OperandKind::FirstColumnInput && o.underlined_of.empty()) v.push_back(&o);
        return v;
    }
    std::vector<const OperandDecl*> function_outputs() const {
        std::vector<const OperandDecl*> v;
        for (auto& o : operands)
            if (o.kind != OperandKind::Input && o.underlined_of.empty()) v.push_back(&o);
        return v;
    }
};

// Display conventions for partitioned blocks: scalar blocks of D/U/H print as
// delta/nu/eta, vector blocks lowercase the operand letter.
inline std::string scalar_block_stem(const std::string& base) {
    static const std::map<std::string, std::string> greek = {
        {"A", "alpha"}, {"B", "beta"}, {"D", "delta"}, {"G", "gamma"}, {"H", "eta"},
        {"K", "kappa"}, {"L", "lambda"}, {"M", "mu"},  {"N", "nu"},    {"R", "rho"},
        {"S", "sigma"}, {"T", "tau"},   {"U", "nu"},   {"W", "omega"}, {"X", "xi"}};
    auto it = greek.find(base);
    if (it != greek.end()) return it->second;
    std::string s = base;
    for (auto& c : s) c = char(std::tolower(c));
    return s;
}

inline std::string lower_stem(const std::string& base) {
    std::string s = base;
    for (auto& c : s) c = char(std::tolower(c));
    return s;
}

inline std::string block_display(const std::string& base, const std::string& region,
                                 const SymDim& r, const SymDim& c) {
    if (region.empty()) return base;
    if (r.is_one() && c.is_one()) return scalar_block_stem(base) + "_" + region;
    if (r.is_one() || c.is_one()) return lower_stem(base) + "_" + region;
    return base + "_" + region;
}

} // namespace flame
