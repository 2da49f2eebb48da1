#pragma once

#include <string>
#include <utility>

#include "dagfit/bpl.hpp"
#include "dagfit/conditionals.hpp"

namespace dagfit {

// One JSON file holding the distribution parameters and the conditional
// model. Numbers survive a save/load round trip bit-exactly.
void save_checkpoint(const std::string& path, const BplParams& params,
                     const ConditionalModel& model);
std::pair<BplParams, ConditionalModel> load_checkpoint(const std::string& path);

}  // namespace dagfit
