#pragma once

#include <array>
#include <string>
#include <string_view>

#include "promptgrid/common.hpp"

namespace promptgrid {

/// Five-component prompt representation. Only `task` is required; the others
/// may be empty. Flattening and re-parsing preserves component text exactly.
struct StructuredPrompt {
    std::string role;
    std::string task;
    std::string constraints;
    std::string examples;
    std::string format;

    static constexpr std::array<std::string_view, 5> component_names{"role", "task", "constraints",
                                                                     "examples", "format"};

    std::string& component(std::string_view name);
    const std::string& component(std::string_view name) const;

    /// Labeled-section text: "Role: ...\nTask: ..." for non-empty components.
    std::string flatten() const;

    bool operator==(const StructuredPrompt&) const = default;
};

/// Rule-based parser: splits on labeled section headers (Role:/Task:/
/// Constraints:/Examples:/Format:, case-insensitive, at line starts).
/// Unlabeled leading text goes to `task`. Throws EmptyPromptError on
/// empty/whitespace input.
StructuredPrompt parse_structured(const std::string& text);

}  // namespace promptgrid
