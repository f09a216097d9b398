#pragma once

#include <optional>
#include <string>
#include <vector>

namespace idmne {

// Exit codes shared by every command: 0 success, 2 usage/config error,
// 3 numeric failure during training.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

struct CliOverrides {
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
};

int cmd_train(const std::string& config_path, const CliOverrides& overrides);
int cmd_ablate(const std::string& config_path, const CliOverrides& overrides);
int cmd_sweep_tau(const std::string& config_path, const std::vector<double>& taus,
                  const CliOverrides& overrides);
int cmd_eval(const std::string& checkpoint_path, const std::string& config_path,
             const CliOverrides& overrides);

}  // namespace idmne
