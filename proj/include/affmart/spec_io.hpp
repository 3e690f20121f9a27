#pragma once

#include <stdexcept>
#include <string>

#include "json.hpp"

#include "affmart/params.hpp"

namespace affmart {

/// Spec loading failure. `where()` is a key path such as `kappa[1].weight_expr`
/// or `line 4, column 7` for syntax errors.
class SpecError : public std::runtime_error {
public:
    SpecError(std::string where, const std::string& what)
        : std::runtime_error(where.empty() ? what : where + ": " + what), where_(std::move(where)) {}

    const std::string& where() const { return where_; }

private:
    std::string where_;
};

AffineParams parse_spec(const std::string& text);
AffineParams load_spec(const std::string& path);

/// Decodes a parsed document; dimension and shape errors name the field.
AffineParams params_from_json(const nlohmann::json& doc);
nlohmann::json params_to_json(const AffineParams& params);

JumpMeasure measure_from_json(const nlohmann::json& node, std::size_t dim, const std::string& where);
nlohmann::json measure_to_json(const JumpMeasure& measure);

}  // namespace affmart
