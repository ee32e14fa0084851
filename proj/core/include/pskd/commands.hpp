#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pskd/gradcheck.hpp"

namespace pskd {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRun = 2;
inline constexpr int kExitAcceptance = 3;

int cmd_synth(const std::string& config_path, bool force);
int cmd_train(const std::string& config_path, const std::optional<std::string>& out_dir);
int cmd_gridsearch(const std::string& config_path, const std::string& grid_path);
int cmd_gradcheck(const std::string& config_path, bool corrupt_backward);
int cmd_report(const std::string& run_dir);

// The gradient checks behind cmd_gradcheck, reusable from tests: L_C,
// L_K, L_MK, L_S and the total objective on small random nets, checked
// against central differences.
struct GradCheckCase {
    std::string name;
    GradCheckReport report;
};

std::vector<GradCheckCase> run_loss_gradchecks(std::uint64_t seed, double h, double tol,
                                               bool corrupt_backward);

}  // namespace pskd
