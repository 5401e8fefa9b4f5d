#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flame/matrix.hpp"
#include "flame/render.hpp"
#include "flame/worksheet.hpp"

namespace flame {

struct MaxIterExceeded : FlameError {
    explicit MaxIterExceeded(const std::string& w) : FlameError("MaxIterExceeded", w) {}
};

enum class ProblemClass { SPD, GeneralNonsingular, DiagDominant };

struct ConcreteProblem {
    Mat A;
    Mat b;   // n x 1
    Mat x0;  // n x 1
    ProblemClass cls = ProblemClass::SPD;
    std::uint64_t seed = 0;
    std::map<std::string, double> scalars;  // omega, alpha, ...
    bool random_shadow = false;  // start the shadow residual from a random vector
};

inline ProblemClass problem_class_for(const MethodDescription& desc) {
    // stationary methods declare the split D/L/U as inputs
    bool stationary = desc.find("L") && desc.find("U") && desc.find("D") &&
                      desc.find("D")->kind == OperandKind::Input;
    if (stationary) return ProblemClass::DiagDominant;
    for (auto& o : desc.operands)
        if (o.name == "A")
            for (auto p : o.props)
                if (p == PropertyName::Symmetric || p == PropertyName::SPD) return ProblemClass::SPD;
    if (desc.operation == "SD" || desc.operation == "RICH") return ProblemClass::SPD;
    if (desc.find("A")) return ProblemClass::GeneralNonsingular;
    return ProblemClass::DiagDominant;
}

// Reproducible concrete instance of the class a method's precondition demands.
inline ConcreteProblem instantiate(ProblemClass cls, int n, std::uint64_t seed) {
    if (n < 2) throw FlameError("BadArgument", "instantiate needs n >= 2");
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(seed + attempt * 7919);
        ConcreteProblem p;
        p.cls = cls;
        p.seed = seed + attempt * 7919;
        switch (cls) {
            case ProblemClass::SPD: {
                Mat m = rng.matrix(n, n);
                p.A = m.transposed() * m;
                for (int i = 0; i < n; ++i) p.A(i, i) += n;
                break;
            }
            case ProblemClass::GeneralNonsingular: {
                Mat m = rng.matrix(n, n);
                p.A = Mat::identity(n) + (0.5 / std::sqrt(double(n))) * m;
                break;
            }
            case ProblemClass::DiagDominant: {
                p.A = rng.matrix(n, n);
                for (int i = 0; i < n; ++i) {
                    double s = 0;
                    for (int j = 0; j < n; ++j)
                        if (j != i) s += std::fabs(p.A(i, j));
                    p.A(i, i) = s + 1.0;
                }
                break;
            }
        }
        p.b = rng.matrix(n, 1);
        p.x0 = Mat(n, 1);
        p.scalars["w"] = 1.0;
        p.scalars["omega"] = 1.0;
        p.scalars["alpha"] = 1.0 / p.A.inf_norm();
        // class verification; resample on failure
        bool ok = true;
        if (cls == ProblemClass::SPD) {
            double asym = (p.A - p.A.transposed()).max_abs();
            ok = asym == 0.0 && cholesky_ok(p.A);
        } else if (cls == ProblemClass::GeneralNonsingular) {
            ok = cond1_estimate(p.A) <= 1e3;
        } else {
            for (int i = 0; i < n && ok; ++i) {
                double s = 0;
                for (int j = 0; j < n; ++j)
                    if (j != i) s += std::fabs(p.A(i, j));
                if (std::fabs(p.A(i, i)) <= s) ok = false;
            }
        }
        if (ok) return p;
        if (attempt > 64) throw FlameError("BadArgument", "could not build problem class");
    }
}

inline Mat oracle_solve(const ConcreteProblem& p) { return solve_dense(p.A, p.b); }

// ---- worksheet interpreter ---------------------------------------------------

struct RunTrace {
    int iterations = 0;
    bool converged = false;
    std::vector<double> guard_values;
    std::map<std::string, Mat> storage;   // full backing store per operand
    std::map<std::string, int> widths;    // computed column count (tall) or size (square)
    double final_residual = 0;            // || b - A x_last || when x exists
};

struct Interpreter {
    const MethodDescription& desc;
    const Worksheet& ws;
    const ConcreteProblem& prob;
    double eps;
    int max_iter;

    int n = 0;
    int cap = 0;  // column capacity
    std::map<std::string, Mat> store;
    std::map<std::string, double> scalars;
    std::map<std::string, Mat> temps;  // CSE auxiliaries, per iteration
    std::map<std::string, std::pair<char, int>> layout;  // operand -> (kind tall/square/fixed, ...)

    Interpreter(const MethodDescription& d, const Worksheet& w, const ConcreteProblem& p, double e, int mi)
        : desc(d), ws(w), prob(p), eps(e), max_iter(mi) {
        n = prob.A.rows ? prob.A.rows : prob.b.rows;
        cap = max_iter + 4;
        bind_inputs();
    }

    static Mat strict_lower(const Mat& a) {
        Mat m(a.rows, a.cols);
        for (int i = 0; i < a.rows; ++i)
            for (int j = 0; j < i; ++j) m(i, j) = a(i, j);
        return m;
    }
    static Mat strict_upper(const Mat& a) {
        Mat m(a.rows, a.cols);
        for (int i = 0; i < a.rows; ++i)
            for (int j = i + 1; j < a.cols; ++j) m(i, j) = a(i, j);
        return m;
    }
    static Mat diag_of(const Mat& a) {
        Mat m(a.rows, a.cols);
        for (int i = 0; i < a.rows; ++i) m(i, i) = a(i, i);
        return m;
    }

    void bind_inputs() {
        for (auto& o : desc.operands) {
            if (!o.underlined_of.empty()) continue;
            auto d = o.dims();
            bool growing = !d.second.is_const() || !d.first.is_const();
            if (o.kind == OperandKind::Input) {
                if (o.shape == ShapeRole::ScalarFixed) {
                    auto it = prob.scalars.find(o.name);
                    scalars[o.name] = it != prob.scalars.end() ? it->second : 1.0;
                } else if (o.shape == ShapeRole::VectorFixed) {
                    store[o.name] = prob.b;
                } else if (o.name == "D") {
                    store[o.name] = diag_of(prob.A);
                } else if (o.name == "L") {
                    store[o.name] = -1.0 * strict_lower(prob.A);
                } else if (o.name == "U") {
                    store[o.name] = -1.0 * strict_upper(prob.A);
                } else {
                    store[o.name] = prob.A;
                }
                continue;
            }
            // growing operands: dense backing store
            if (o.shape == ShapeRole::SmallSquareGrowing || o.shape == ShapeRole::TrailingGrowing) {
                store[o.name] = Mat(cap, cap);
            } else if (growing) {
                store[o.name] = Mat(n, cap);
            } else {
                store[o.name] = Mat(n, 1);
            }
            if (o.kind == OperandKind::FirstColumnInput) {
                Mat first;
                if (o.name == "X") {
                    first = prob.x0;
                } else if (o.name[0] == 'R') {
                    // residual convention of the descriptions: r0 = A x0 - b
                    first = prob.A * prob.x0 - prob.b;
                    bool shadow = o.name.size() > 1;
                    if (shadow && prob.random_shadow) {
                        Rng rng(prob.seed ^ 0x5f5f5f5fULL);
                        first = rng.matrix(n, 1);
                    }
                } else {
                    first = prob.b;  // start vector for Krylov-type sequences
                }
                for (int i = 0; i < n; ++i) store[o.name](i, 0) = first(i, 0);
            }
        }
    }

    // label -> (rowRange, colRange) against the current done-width i
    struct Range {
        int r0, r1, c0, c1;
    };
    Range range_of(const std::string& base, const std::string& region, int i) const {
        const OperandDecl* o = desc.find(base);
        const OperandDecl* full = (o && !o->underlined_of.empty()) ? desc.find(o->underlined_of) : o;
        bool square = full->shape == ShapeRole::SmallSquareGrowing;
        auto colspan = [&](char c) -> std::pair<int, int> {
            switch (c) {
                case 'L': case 'T': return {0, i};
                case 'R': case 'B': return {i, i + 1};
                case '+': return {i + 1, i + 2};
                case '0': return {0, i};
                case '1': return {i, i + 1};
                case '2': return {i + 1, i + 2};
                case '3': return {i + 2, i + 3};
            }
            throw FlameError("Internal", "bad region label " + region);
        };
        if (!square) {
            auto [c0, c1] = colspan(region.size() ? region[0] : 'L');
            return {0, n, c0, c1};
        }
        // two-character square regions: row label then column label
        char rl = region[0], cl = region.size() > 1 ? region[1] : region[0];
        auto [r0, r1] = colspan(rl == 'T' ? 'L' : rl == 'B' ? 'R' : rl);
        auto [c0, c1] = colspan(cl == 'L' ? 'L' : cl == 'R' ? 'R' : cl);
        return {r0, r1, c0, c1};
    }

    Mat read_block(const std::string& base, const std::string& region, int i) const {
        if (region.empty()) {
            auto it = store.find(base);
            if (it != store.end()) return it->second;
            auto s = scalars.find(base);
            if (s != scalars.end()) {
                Mat m(1, 1);
                m(0, 0) = s->second;
                return m;
            }
            throw FlameError("Internal", "unbound operand " + base);
        }
        const OperandDecl* o = desc.find(base);
        std::string backing = o && !o->underlined_of.empty() ? o->underlined_of : base;
        Range r = range_of(base, region, i);
        return store.at(backing).slice(r.r0, r.r1, r.c0, r.c1);
    }

    void write_block(const std::string& base, const std::string& region, int i, const Mat& v) {
        const OperandDecl* o = desc.find(base);
        std::string backing = o && !o->underlined_of.empty() ? o->underlined_of : base;
        Range r = range_of(base, region, i);
        Mat& m = store.at(backing);
        if (v.rows != r.r1 - r.r0 || v.cols != r.c1 - r.c0)
            throw DimensionMismatch("block write shape");
        for (int a = r.r0; a < r.r1; ++a)
            for (int b = r.c0; b < r.c1; ++b) m(a, b) = v(a - r.r0, b - r.c0);
    }

    Mat solve_with_hint(const TermPtr& mterm, const Mat& m, const Mat& rhs) const {
        auto it = ws.solve_hints.find(key_of(mterm));
        std::string hint = it != ws.solve_hints.end() ? it->second : "general";
        if (m.rows != m.cols) throw DimensionMismatch("inverse of non-square block");
        if (m.rows == 0) return Mat(0, rhs.cols);
        if (hint == "diag") {
            Mat x = rhs;
            for (int i = 0; i < m.rows; ++i)
                for (int c = 0; c < x.cols; ++c) x(i, c) = safe_div(x(i, c), m(i, i));
            return x;
        }
        if (hint == "lower") return tri_solve(m, rhs, true);
        if (hint == "upper") return tri_solve(m, rhs, false);
        return solve_dense(m, rhs);
    }

    Mat eval(const TermPtr& t, int i) const {
        using K = Term::Kind;
        switch (t->kind) {
            case K::Operand: {
                auto it = temps.find(t->base);
                Mat m;
                if (t->region.empty() && it != temps.end()) m = it->second;
                else m = read_block(t->base, t->region, i);
                if (t->transposed) m = m.transposed();
                if (t->inverted) {
                    Mat rhs = Mat::identity(m.rows);
                    m = solve_with_hint(with_flags(t, t->transposed, false), m, rhs);
                }
                return m;
            }
            case K::Scalar: {
                Mat m(1, 1);
                m(0, 0) = t->coeff.value();
                return m;
            }
            case K::Sum: {
                Mat acc = eval(t->kids[0], i);
                for (size_t j = 1; j < t->kids.size(); ++j) acc = acc + eval(t->kids[j], i);
                return acc;
            }
            case K::Product: {
                // evaluate right-to-left so inverse factors become solves
                Mat acc;
                bool have = false;
                for (auto rit = t->kids.rbegin(); rit != t->kids.rend(); ++rit) {
                    const TermPtr& f = *rit;
                    bool is_inverse_node = f->kind == K::Inverse;
                    bool is_inverted_atom =
                        f->kind == K::Operand && f->inverted;
                    if ((is_inverse_node || is_inverted_atom) && have && acc.cols >= 1) {
                        TermPtr inner = is_inverse_node ? f->kids[0] : with_flags(f, f->transposed, false);
                        Mat m = eval(is_inverse_node ? f->kids[0] : inner, i);
                        if (is_inverted_atom && f->transposed) m = m.transposed();
                        acc = solve_with_hint(inner, m, acc);
                        continue;
                    }
                    Mat m = eval(f, i);
                    if (!have) { acc = m; have = true; continue; }
                    if (m.cols == 1 && m.rows == 1) acc = m(0, 0) * acc;
                    else if (acc.rows == 1 && acc.cols == 1) acc = acc(0, 0) * m;
                    else acc = m * acc;
                }
                if (!have) acc = Mat(1, 1), acc(0, 0) = 1.0;
                double c = t->coeff.value();
                if (c != 1.0) acc = c * acc;
                return acc;
            }
            case K::Quotient: {
                Mat num = eval(t->kids[0], i);
                Mat den = eval(t->kids[1], i);
                Mat out = num;
                for (auto& v : out.a) v = safe_div(v, den(0, 0));
                return out;
            }
            case K::Inverse: {
                Mat m = eval(t->kids[0], i);
                return solve_with_hint(t->kids[0], m, Mat::identity(m.rows));
            }
            case K::Norm: {
                Mat m = eval(t->kids[0], i);
                Mat r(1, 1);
                r(0, 0) = m.norm2_vec();
                return r;
            }
            case K::Const: {
                if (t->ckind == ConstKind::Zero) return Mat(0, 0);
                throw FlameError("Internal", "constant in executable assignment");
            }
            default:
                throw FlameError("Internal", "cannot evaluate " + print_term(t));
        }
    }

    void execute(const Assignment& a, int i) {
        Mat v = eval(a.rhs, i);
        const TermPtr& t = a.targets[0];
        if (t->region.empty() && !desc.find(t->base)) {
            temps[t->base] = v;  // CSE auxiliary
            return;
        }
        write_block(t->base, t->region, i, v);
    }

    bool guard_holds(int i) const {
        const LoopGuard& g = ws.guard;
        switch (g.form) {
            case LoopGuard::Form::SizeBound: {
                int bound = g.bound_cols.is_const() ? g.bound_cols.constant : size_bound;
                return i + 1 < bound;
            }
            case LoopGuard::Form::NormLastKnownCol: {
                int col = ws.guard_output_flavour ? i - 1 : i;
                if (col < 0) return true;
                return read_block(g.operand, ws.guard_output_flavour ? "L" : "R", i)
                           .col(ws.guard_output_flavour ? col : 0)
                           .norm2_vec() >= eps;
            }
            case LoopGuard::Form::SuccessiveDiff: {
                if (i == 0) return true;
                Mat cur = store.at(g.operand).col(i);
                Mat prev = store.at(g.operand).col(i - 1);
                return (cur - prev).norm2_vec() >= eps;
            }
        }
        return false;
    }

    int size_bound = 0;  // concrete bound for size guards, set by run()
    int guard_bound() const { return size_bound; }

    RunTrace run(int m_bound = 0) {
        size_bound = m_bound ? m_bound : max_iter;
        RunTrace tr;
        for (auto& a : ws.preprocessing) execute(a, 0);
        int i = 0;
        while (true) {
            bool g;
            {
                double gv = 0;
                if (ws.guard.form == LoopGuard::Form::NormLastKnownCol) {
                    int col = ws.guard_output_flavour ? i - 1 : i;
                    gv = col < 0 ? -1.0
                                 : store.at(backing_of(ws.guard.operand)).col(col >= 0 && !ws.guard_output_flavour ? i : col).norm2_vec();
                } else if (ws.guard.form == LoopGuard::Form::SuccessiveDiff) {
                    gv = i == 0 ? -1.0
                                : (store.at(ws.guard.operand).col(i) - store.at(ws.guard.operand).col(i - 1)).norm2_vec();
                } else {
                    gv = double(i + 1);
                }
                tr.guard_values.push_back(gv);
                g = guard_holds(i);
            }
            if (!g) {
                tr.converged = true;
                break;
            }
            if (i >= max_iter) break;
            temps.clear();
            for (auto& a : ws.update) execute(a, i);
            ++i;
        }
        tr.iterations = i;
        tr.storage = store;
        for (auto& o : desc.operands) {
            if (!o.underlined_of.empty()) continue;
            tr.widths[o.name] = i + 1;
        }
        if (desc.find("X")) {
            Mat x = store.at("X").col(i);
            tr.final_residual = (prob.b - prob.A * x).norm2_vec();
        } else if (ws.guard.form == LoopGuard::Form::NormLastKnownCol && desc.find(ws.guard.operand)) {
            int col = ws.guard_output_flavour ? std::max(0, i - 1) : i;
            tr.final_residual = store.at(backing_of(ws.guard.operand)).col(col).norm2_vec();
        }
        return tr;
    }

    std::string backing_of(const std::string& base) const {
        const OperandDecl* o = desc.find(base);
        return o && !o->underlined_of.empty() ? o->underlined_of : base;
    }
};

inline RunTrace run_worksheet(const MethodDescription& desc, const Worksheet& ws,
                              const ConcreteProblem& prob, double eps, int max_iter, int m_bound = 0) {
    Interpreter interp(desc, ws, prob, eps, max_iter);
    return interp.run(m_bound);
}

// ---- property validation -------------------------------------------------------

struct PropertyCheck {
    std::string property;
    bool applicable = true;
    bool pass = true;
    double violation = 0;  // max violating magnitude relative to the subject norm
};

// Concrete evaluation of a symbolic term against a name->matrix binding.
// Block references look up "Base_region"; structural constants materialize at
// the dimensions implied by (n_val, m_val).
inline std::optional<Mat> eval_concrete(const std::map<std::string, Mat>& bind, int n_val, int m_val,
                                        const TermPtr& t, int k_val = -1) {
    if (k_val < 0) k_val = m_val;
    using K = Term::Kind;
    auto rec = [&](const TermPtr& u) { return eval_concrete(bind, n_val, m_val, u, k_val); };
    switch (t->kind) {
        case K::Operand: {
            // display name first (r_R, delta_BR), then the raw base_region key
            auto it = t->disp.empty() ? bind.end() : bind.find(t->disp);
            if (it == bind.end())
                it = bind.find(t->region.empty() ? t->base : t->base + "_" + t->region);
            if (it == bind.end()) return std::nullopt;
            Mat m = it->second;
            if (t->transposed) m = m.transposed();
            if (t->inverted) {
                if (m.rows != m.cols) return std::nullopt;
                try {
                    m = solve_dense(m, Mat::identity(m.rows));
                } catch (const SingularMatrix&) {
                    return std::nullopt;
                }
            }
            return m;
        }
        case K::Scalar: {
            Mat m(1, 1);
            m(0, 0) = t->coeff.value();
            return m;
        }
        case K::Const: {
            SymDim r = t->crows, c = t->ccols;
            int rr = r.eval(n_val, m_val, k_val), cc = c.eval(n_val, m_val, k_val);
            if (rr < 0 || cc < 0) return std::nullopt;
            Mat m(rr, cc);
            switch (t->ckind) {
                case ConstKind::Identity:
                case ConstKind::IdentityDropLast:
                    for (int i = 0; i < std::min(rr, cc); ++i) m(i, i) = 1;
                    break;
                case ConstKind::LowerShift:
                case ConstKind::LowerShiftDropLast:
                    for (int i = 1; i < rr; ++i)
                        if (i - 1 < cc) m(i, i - 1) = 1;
                    break;
                case ConstKind::UnitFirst:
                    if (rr > 0) m(0, 0) = 1;
                    break;
                case ConstKind::UnitLast:
                    if (rr > 0) m(rr - 1, 0) = 1;
                    break;
                case ConstKind::Ones:
                    for (int i = 0; i < rr; ++i) m(i, 0) = 1;
                    break;
                case ConstKind::Zero:
                    break;
            }
            if (t->transposed) m = m.transposed();
            return m;
        }
        case K::Product: {
            std::optional<Mat> acc;
            for (auto& k : t->kids) {
                auto v = rec(k);
                if (!v) return std::nullopt;
                if (!acc) acc = *v;
                else if (v->rows == 1 && v->cols == 1) acc = (*v)(0, 0) * *acc;
                else if (acc->rows == 1 && acc->cols == 1) acc = (*acc)(0, 0) * *v;
                else acc = *acc * *v;
            }
            if (!acc) {
                Mat one(1, 1);
                one(0, 0) = 1;
                acc = one;
            }
            return t->coeff.is_one() ? *acc : t->coeff.value() * *acc;
        }
        case K::Sum: {
            std::optional<Mat> acc;
            for (auto& k : t->kids) {
                auto v = rec(k);
                if (!v) return std::nullopt;
                if (!acc) acc = *v;
                else acc = *acc + *v;
            }
            return acc;
        }
        case K::Grid: {
            std::vector<std::vector<Mat>> rows;
            for (int i = 0; i < t->grows; ++i) {
                std::vector<Mat> row;
                for (int j = 0; j < t->gcols; ++j) {
                    auto v = rec(t->kids[i * t->gcols + j]);
                    if (!v) return std::nullopt;
                    row.push_back(*v);
                }
                rows.push_back(row);
            }
            int R = 0, C = 0;
            for (auto& row : rows) R += row[0].rows;
            for (auto& b : rows[0]) C += b.cols;
            Mat out(R, C);
            int r0 = 0;
            for (auto& row : rows) {
                int c0 = 0;
                for (auto& b : row) {
                    for (int i = 0; i < b.rows; ++i)
                        for (int j = 0; j < b.cols; ++j) out(r0 + i, c0 + j) = b(i, j);
                    c0 += b.cols;
                }
                r0 += row[0].rows;
            }
            return out;
        }
        case K::Quotient: {
            auto num = rec(t->kids[0]);
            auto den = rec(t->kids[1]);
            if (!num || !den) return std::nullopt;
            Mat out = *num;
            for (auto& v : out.a) v = safe_div(v, (*den)(0, 0));
            return out;
        }
        case K::Inverse: {
            auto v = rec(t->kids[0]);
            if (!v || v->rows != v->cols) return std::nullopt;
            try {
                return solve_dense(*v, Mat::identity(v->rows));
            } catch (const SingularMatrix&) {
                return std::nullopt;
            }
        }
        case K::Transpose: {
            auto v = rec(t->kids[0]);
            if (!v) return std::nullopt;
            return v->transposed();
        }
        case K::Norm: {
            auto v = rec(t->kids[0]);
            if (!v) return std::nullopt;
            Mat out(1, 1);
            out(0, 0) = v->norm2_vec();
            return out;
        }
        case K::Call:
            return std::nullopt;
    }
    return std::nullopt;
}

// Evaluate a derived operand-level property on concrete full matrices.
inline std::vector<PropertyCheck> validate_properties(const PropertySet& props,
                                                      const std::map<std::string, Mat>& bind, int n_val,
                                                      int m_val, double tol) {
    std::vector<PropertyCheck> out;
    for (auto& p : props) {
        auto band = band_of_property(p.name);
        bool zd = p.name == PropertyName::ZeroDiagonal;
        if (!band && !zd) continue;
        auto v = eval_concrete(bind, n_val, m_val, p.subject);
        if (!v) {
            out.push_back({p.str(), false, true, 0});
            continue;
        }
        double scale = std::max(v->fro(), 1e-30);
        double worst = 0;
        for (int i = 0; i < v->rows; ++i)
            for (int j = 0; j < v->cols; ++j) {
                bool allowed;
                if (zd) allowed = i != j;
                else allowed = !band->empty() && (band->lo <= -Band::INF || j - i >= band->lo) &&
                               (band->hi >= Band::INF || j - i <= band->hi);
                if (!allowed) worst = std::max(worst, std::fabs((*v)(i, j)));
            }
        out.push_back({p.str(), true, worst <= tol * scale, worst / scale});
    }
    return out;
}

// ---- reference iterations (oracles) ----------------------------------------------

// Orthogonal-residual CG with full orthogonalization; valid for symmetric and
// nonsymmetric A. Builds the operands of the matrix representation directly
// from the textbook recurrences.
struct CgReference {
    Mat P, R, X, U, D;  // P n x m, R/X n x (m+1), U/D m x m
};

inline CgReference reference_cg(const Mat& A, const Mat& b, const Mat& x0, int steps) {
    int n = A.rows;
    CgReference ref;
    ref.P = Mat(n, steps);
    ref.R = Mat(n, steps + 1);
    ref.X = Mat(n, steps + 1);
    ref.U = Mat(steps, steps);
    ref.D = Mat(steps, steps);
    Mat r = A * x0 - b;
    Mat x = x0;
    std::vector<Mat> ps, aps;
    for (int i = 0; i < n; ++i) {
        ref.R(i, 0) = r(i, 0);
        ref.X(i, 0) = x(i, 0);
    }
    auto dot = [&](const Mat& u, const Mat& v) {
        double s = 0;
        for (int t = 0; t < u.rows; ++t) s += u(t, 0) * v(t, 0);
        return s;
    };
    for (int k = 0; k < steps; ++k) {
        // u_{ik} solves p_i^T A p_k = 0 for i < k by forward substitution
        Mat Ar = A * r;
        std::vector<double> u(k);
        for (int i = 0; i < k; ++i) {
            double s = dot(ps[i], Ar);
            for (int j = 0; j < i; ++j) s += dot(ps[i], aps[j]) * u[j];
            u[i] = -s / dot(ps[i], aps[i]);
            ref.U(i, k) = u[i];
        }
        Mat p = r;
        for (int i = 0; i < k; ++i) p = p + u[i] * ps[i];
        Mat Ap = A * p;
        double delta = dot(r, r) / dot(r, Ap);
        ref.D(k, k) = delta;
        for (int t = 0; t < n; ++t) ref.P(t, k) = p(t, 0);
        r = r - delta * Ap;
        x = x - delta * p;
        ps.push_back(p);
        aps.push_back(Ap);
        for (int t = 0; t < n; ++t) {
            ref.R(t, k + 1) = r(t, 0);
            ref.X(t, k + 1) = x(t, 0);
        }
    }
    return ref;
}

// Hand-written Gauss-Seidel on A = D - L - U (D diagonal part, L/U the negated
// strict triangles), matching the derived update's arithmetic.
inline std::vector<Mat> reference_gauss_seidel(const Mat& A, const Mat& b, const Mat& x0, int steps) {
    std::vector<Mat> xs{x0};
    Mat D = Interpreter::diag_of(A);
    Mat L = -1.0 * Interpreter::strict_lower(A);
    Mat U = -1.0 * Interpreter::strict_upper(A);
    Mat DmL = D - L;
    Mat x = x0;
    for (int k = 0; k < steps; ++k) {
        Mat rhs = U * x + b;
        x = tri_solve(DmL, rhs, true);
        xs.push_back(x);
    }
    return xs;
}

} // namespace flame
