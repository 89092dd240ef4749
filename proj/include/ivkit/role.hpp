#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace ivkit {

/// Role a block of columns plays in estimation.
enum class Role { W, X, Y, Z, Latent };

inline std::string_view to_string(Role role) {
    switch (role) {
        case Role::W: return "w";
        case Role::X: return "x";
        case Role::Y: return "y";
        case Role::Z: return "z";
        case Role::Latent: return "latent";
    }
    return "latent";
}

inline std::optional<Role> parse_role(std::string_view text) {
    if (text == "w") return Role::W;
    if (text == "x") return Role::X;
    if (text == "y") return Role::Y;
    if (text == "z") return Role::Z;
    if (text == "latent") return Role::Latent;
    return std::nullopt;
}

}  // namespace ivkit
