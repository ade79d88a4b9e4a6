#include "eot/errors.hpp"

namespace eot {

namespace {

std::string describe(std::size_t step, std::size_t chain, const std::string& detail,
                     std::int64_t iteration) {
    std::string msg = "Langevin chain " + std::to_string(chain) + " diverged at step " +
                      std::to_string(step);
    if (iteration >= 0) {
        msg += " (training iteration " + std::to_string(iteration) + ")";
    }
    return msg + ": " + detail;
}

}  // namespace

DivergedChainError::DivergedChainError(std::size_t step, std::size_t chain,
                                       const std::string& detail, std::int64_t iteration)
    : NumericalError(describe(step, chain, detail, iteration)),
      step_(step),
      chain_(chain),
      iteration_(iteration),
      detail_(detail) {}

DivergedChainError DivergedChainError::at_iteration(std::int64_t iteration) const {
    return DivergedChainError(step_, chain_, detail_, iteration);
}

}  // namespace eot
