#include "affmart/spec_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace affmart {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double number(const json& node, const std::string& where) {
    if (!node.is_number()) throw SpecError(where, "expected a number, got " + std::string(node.type_name()));
    return node.get<double>();
}

std::size_t count(const json& node, const std::string& where) {
    if (!node.is_number_integer() || node.get<long long>() < 0)
        throw SpecError(where, "expected a nonnegative integer");
    return node.get<std::size_t>();
}

const json& field(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) throw SpecError(where, std::string("missing key '") + key + "'");
    return *it;
}

Expr expr(const json& node, const std::string& where) {
    if (!node.is_string()) throw SpecError(where, "expected an expression string");
    try {
        return Expr::parse(node.get<std::string>());
    } catch (const ExprError& e) {
        throw SpecError(where, e.what());
    }
}

std::vector<double> numbers(const json& node, const std::string& where) {
    if (!node.is_array()) throw SpecError(where, "expected an array");
    std::vector<double> v;
    for (std::size_t k = 0; k < node.size(); ++k)
        v.push_back(number(node[k], where + "[" + std::to_string(k) + "]"));
    return v;
}

Eigen::MatrixXd matrix(const json& node, std::size_t d, const std::string& where) {
    Eigen::MatrixXd a(d, d);
    if (!node.is_array()) throw SpecError(where, "expected a matrix");
    if (node.size() == d * d && (d == 0 || !node[0].is_array())) {
        for (std::size_t k = 0; k < d * d; ++k)
            a(k / d, k % d) = number(node[k], where + "[" + std::to_string(k) + "]");
        return a;
    }
    if (node.size() != d) throw SpecError(where, "expected " + std::to_string(d) + " rows");
    for (std::size_t r = 0; r < d; ++r) {
        const std::string rw = where + "[" + std::to_string(r) + "]";
        const auto row = numbers(node[r], rw);
        if (row.size() != d) throw SpecError(rw, "expected " + std::to_string(d) + " columns");
        for (std::size_t c = 0; c < d; ++c) a(r, c) = row[c];
    }
    return a;
}

json bound(double v) { return std::isinf(v) ? json(nullptr) : json(v); }

}  // namespace

JumpMeasure measure_from_json(const json& node, std::size_t dim, const std::string& where) {
    if (node.is_null()) return JumpMeasure::zero(dim);
    if (!node.is_object()) throw SpecError(where, "expected a measure descriptor object");
    const json& kind_node = field(node, "kind", where);
    if (!kind_node.is_string()) throw SpecError(where + ".kind", "expected a string");
    const std::string kind = kind_node.get<std::string>();
    try {
        if (kind == "zero") return JumpMeasure::zero(dim);
        if (kind == "finite_atoms") {
            const json& atoms = field(node, "atoms", where);
            if (!atoms.is_array()) throw SpecError(where + ".atoms", "expected an array");
            std::vector<Atom> out;
            for (std::size_t a = 0; a < atoms.size(); ++a) {
                const std::string aw = where + ".atoms[" + std::to_string(a) + "]";
                Atom atom;
                atom.point = numbers(field(atoms[a], "point", aw), aw + ".point");
                if (atom.point.size() != dim)
                    throw SpecError(aw + ".point", "expected " + std::to_string(dim) + " coordinates");
                atom.weight = number(field(atoms[a], "weight", aw), aw + ".weight");
                if (!(atom.weight > 0.0)) throw SpecError(aw + ".weight", "weight must be positive");
                out.push_back(std::move(atom));
            }
            return JumpMeasure::finite(dim, std::move(out));
        }
        if (kind == "series") {
            const json& pe = field(node, "point_exprs", where);
            if (!pe.is_array() || pe.size() != dim)
                throw SpecError(where + ".point_exprs",
                                "expected " + std::to_string(dim) + " expressions");
            std::vector<Expr> points;
            for (std::size_t k = 0; k < pe.size(); ++k)
                points.push_back(expr(pe[k], where + ".point_exprs[" + std::to_string(k) + "]"));
            Expr weight = expr(field(node, "weight_expr", where), where + ".weight_expr");
            const json& tail = field(node, "tail", where);
            TailDecay td;
            td.c = number(field(tail, "c", where + ".tail"), where + ".tail.c");
            td.p = number(field(tail, "p", where + ".tail"), where + ".tail.p");
            const double tol = node.contains("tol") ? number(node["tol"], where + ".tol") : 1e-10;
            return JumpMeasure::series(std::move(points), std::move(weight), td, tol);
        }
        if (kind == "density") {
            Expr dens = expr(field(node, "expr", where), where + ".expr");
            const json& dom = field(node, "domain", where);
            if (!dom.is_array()) throw SpecError(where + ".domain", "expected an array of intervals");
            std::vector<Interval> box;
            for (std::size_t k = 0; k < dom.size(); ++k) {
                const std::string dw = where + ".domain[" + std::to_string(k) + "]";
                if (!dom[k].is_array() || dom[k].size() != 2)
                    throw SpecError(dw, "expected [lo, hi]");
                Interval iv;
                iv.lo = dom[k][0].is_null() ? -kInf : number(dom[k][0], dw + "[0]");
                iv.hi = dom[k][1].is_null() ? kInf : number(dom[k][1], dw + "[1]");
                box.push_back(iv);
            }
            std::vector<Expr> extra;
            if (node.contains("extra")) {
                const json& ex = node["extra"];
                if (!ex.is_array()) throw SpecError(where + ".extra", "expected an array");
                for (std::size_t k = 0; k < ex.size(); ++k)
                    extra.push_back(expr(ex[k], where + ".extra[" + std::to_string(k) + "]"));
            }
            if (box.size() + extra.size() != dim)
                throw SpecError(where + ".domain", "domain and extra coordinates give dimension " +
                                                       std::to_string(box.size() + extra.size()) +
                                                       ", expected " + std::to_string(dim));
            const double tz = number(field(node, "tail_zero", where), where + ".tail_zero");
            const double ti = number(field(node, "tail_inf", where), where + ".tail_inf");
            const double tol = node.contains("tol") ? number(node["tol"], where + ".tol") : 1e-8;
            return JumpMeasure::density(std::move(dens), std::move(box), tz, ti, tol, std::move(extra));
        }
    } catch (const MeasureError& e) {
        throw SpecError(where, e.what());
    }
    throw SpecError(where + ".kind", "unknown measure kind '" + kind + "'");
}

json measure_to_json(const JumpMeasure& mu) {
    json out;
    switch (mu.kind()) {
        case JumpMeasure::Kind::FiniteAtomic: {
            out["kind"] = "finite_atoms";
            out["atoms"] = json::array();
            for (const Atom& a : mu.finite_atoms().atoms)
                out["atoms"].push_back({{"point", a.point}, {"weight", a.weight}});
            break;
        }
        case JumpMeasure::Kind::SeriesAtomic: {
            const auto& s = mu.atom_series();
            out["kind"] = "series";
            out["point_exprs"] = json::array();
            for (const auto& e : s.point_exprs) out["point_exprs"].push_back(e.source());
            out["weight_expr"] = s.weight_expr.source();
            out["tail"] = {{"c", s.tail.c}, {"p", s.tail.p}};
            out["tol"] = s.truncation_tol;
            break;
        }
        case JumpMeasure::Kind::Density: {
            const auto& dm = mu.density_measure();
            out["kind"] = "density";
            out["expr"] = dm.density_expr.source();
            out["domain"] = json::array();
            for (const Interval& iv : dm.domain) out["domain"].push_back({bound(iv.lo), bound(iv.hi)});
            if (!dm.extra_coords.empty()) {
                out["extra"] = json::array();
                for (const auto& e : dm.extra_coords) out["extra"].push_back(e.source());
            }
            out["tail_zero"] = dm.tail_exponent_at_zero;
            out["tail_inf"] = dm.tail_exponent_at_infinity;
            out["tol"] = dm.quadrature_tol;
            break;
        }
    }
    return out;
}

AffineParams params_from_json(const json& doc) {
    if (!doc.is_object()) throw SpecError("", "spec must be a JSON object");
    AffineParams p;
    p.m = count(field(doc, "m", ""), "m");
    p.n = count(field(doc, "n", ""), "n");
    const std::size_t d = p.dim();
    if (d == 0) throw SpecError("m", "m + n must be at least 1");

    // A missing key or an empty array means all zeros.
    auto entries = [&](const char* key) -> const json* {
        auto it = doc.find(key);
        if (it == doc.end() || (it->is_array() && it->empty())) return nullptr;
        if (!it->is_array()) throw SpecError(key, "expected an array");
        if (it->size() != d + 1)
            throw SpecError(key, "expected d+1 = " + std::to_string(d + 1) + " entries, got " +
                                     std::to_string(it->size()));
        return &*it;
    };

    const json* alpha = entries("alpha");
    const json* beta = entries("beta");
    const json* gamma = entries("gamma");
    const json* kappa = entries("kappa");
    for (std::size_t j = 0; j <= d; ++j) {
        const std::string js = "[" + std::to_string(j) + "]";
        p.alpha.push_back(alpha ? matrix((*alpha)[j], d, "alpha" + js) : Eigen::MatrixXd::Zero(d, d));
        if (beta) {
            const auto b = numbers((*beta)[j], "beta" + js);
            if (b.size() != d) throw SpecError("beta" + js, "expected " + std::to_string(d) + " entries");
            p.beta.push_back(Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(d)));
        } else {
            p.beta.push_back(Eigen::VectorXd::Zero(d));
        }
        p.gamma.push_back(gamma ? number((*gamma)[j], "gamma" + js) : 0.0);
        p.kappa.push_back(kappa ? measure_from_json((*kappa)[j], d, "kappa" + js) : JumpMeasure::zero(d));
    }
    return p;
}

json params_to_json(const AffineParams& p) {
    json out;
    out["m"] = p.m;
    out["n"] = p.n;
    const std::size_t d = p.dim();
    out["alpha"] = json::array();
    out["beta"] = json::array();
    out["gamma"] = json::array();
    out["kappa"] = json::array();
    for (std::size_t j = 0; j <= d; ++j) {
        json rows = json::array();
        for (std::size_t r = 0; r < d; ++r) {
            json row = json::array();
            for (std::size_t c = 0; c < d; ++c) row.push_back(p.alpha[j](r, c));
            rows.push_back(row);
        }
        out["alpha"].push_back(rows);
        out["beta"].push_back(std::vector<double>(p.beta[j].data(), p.beta[j].data() + d));
        out["gamma"].push_back(p.gamma[j]);
        out["kappa"].push_back(measure_to_json(p.kappa[j]));
    }
    return out;
}

AffineParams parse_spec(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        // Convert the byte offset into a line/column pair.
        std::size_t line = 1, col = 1;
        const std::size_t upto = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
        for (std::size_t k = 0; k < upto; ++k) {
            if (text[k] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw SpecError("line " + std::to_string(line) + ", column " + std::to_string(col),
                        "JSON syntax error");
    }
    return params_from_json(doc);
}

AffineParams load_spec(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SpecError(path, "cannot open spec file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_spec(ss.str());
}

}  // namespace affmart
