#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dgat/autodiff.hpp"

namespace dgat {

// Central finite differences (h, fp64) against the tape's analytic gradients
// for every coordinate of every listed parameter. The rebuild function must be
// deterministic (seed any stochastic op per call). Returns the max relative
// error, with |a - f| / max(|a|, |f|, 1e-4).
double gradcheck_max_rel_err(const std::vector<Parameter*>& params,
                             const std::function<Tape::Var(Tape&)>& build, double h = 1e-5);

struct GradCheckResult {
    std::string name;
    double max_rel_err;
};

// Checks every differentiable primitive and each composite layer of the model
// at `points` random configurations each.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, std::size_t points = 25);

}  // namespace dgat
