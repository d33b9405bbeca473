#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "groundguide/bridge.hpp"
#include "groundguide/decode.hpp"

namespace groundguide {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitBackend = 3;

// "toy:<fixture.json>", "exec:<command>" or "tcp:<host>:<port>".
std::unique_ptr<ModelBackend> open_backend(std::string_view spec,
                                           BridgeOptions options = {});

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace groundguide
