#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace affmart {

enum class Outcome { Holds, Fails, Inconclusive };

const char* to_string(Outcome o);

struct Evidence {
    std::string description;
    double value = 0.0;
    double tolerance = 0.0;
};

/// Three-valued decision. An Inconclusive verdict always carries at least one
/// evidence entry; the factory functions enforce that.
struct Verdict {
    Outcome outcome = Outcome::Inconclusive;
    std::string criterion;
    std::vector<Evidence> evidence;

    static Verdict holds(std::string criterion, std::vector<Evidence> evidence = {});
    static Verdict fails(std::string criterion, std::vector<Evidence> evidence = {});
    static Verdict inconclusive(std::string criterion, std::vector<Evidence> evidence);

    bool is_holds() const { return outcome == Outcome::Holds; }
    bool is_fails() const { return outcome == Outcome::Fails; }
    bool is_inconclusive() const { return outcome == Outcome::Inconclusive; }
};

/// Conjunction over the lattice: any Fails wins, then any Inconclusive.
Outcome combine_all(const std::vector<Outcome>& outcomes);

/// Process exit code for an outcome: 0 Holds, 1 Fails, 2 Inconclusive.
int exit_code(Outcome o);

/// Non-finite evidence values serialize as strings ("inf", "nan").
nlohmann::json to_json(const Verdict& v);

}  // namespace affmart
