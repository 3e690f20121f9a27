#include "affmart/verdict.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace affmart {

const char* to_string(Outcome o) {
    switch (o) {
        case Outcome::Holds: return "Holds";
        case Outcome::Fails: return "Fails";
        case Outcome::Inconclusive: return "Inconclusive";
    }
    return "?";
}

Verdict Verdict::holds(std::string criterion, std::vector<Evidence> evidence) {
    return {Outcome::Holds, std::move(criterion), std::move(evidence)};
}

Verdict Verdict::fails(std::string criterion, std::vector<Evidence> evidence) {
    return {Outcome::Fails, std::move(criterion), std::move(evidence)};
}

Verdict Verdict::inconclusive(std::string criterion, std::vector<Evidence> evidence) {
    if (evidence.empty())
        throw std::logic_error("inconclusive verdict '" + criterion + "' needs evidence");
    return {Outcome::Inconclusive, std::move(criterion), std::move(evidence)};
}

Outcome combine_all(const std::vector<Outcome>& outcomes) {
    bool inconclusive = false;
    for (Outcome o : outcomes) {
        if (o == Outcome::Fails) return Outcome::Fails;
        if (o == Outcome::Inconclusive) inconclusive = true;
    }
    return inconclusive ? Outcome::Inconclusive : Outcome::Holds;
}

int exit_code(Outcome o) {
    switch (o) {
        case Outcome::Holds: return 0;
        case Outcome::Fails: return 1;
        case Outcome::Inconclusive: return 2;
    }
    return 2;
}

namespace {

nlohmann::json number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    return x;
}

}  // namespace

nlohmann::json to_json(const Verdict& v) {
    nlohmann::json ev = nlohmann::json::array();
    for (const Evidence& e : v.evidence)
        ev.push_back({{"description", e.description}, {"value", number(e.value)},
                      {"tolerance", number(e.tolerance)}});
    return {{"outcome", to_string(v.outcome)}, {"criterion", v.criterion}, {"evidence", ev}};
}

}  // namespace affmart
