#include "promptgrid/prompt.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <sstream>

namespace promptgrid {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return char(std::tolower(c)); });
    return out;
}

std::string title_case(std::string_view s) {
    std::string out(s);
    if (!out.empty()) out[0] = char(std::toupper(static_cast<unsigned char>(out[0])));
    return out;
}

// "Role: text" -> ("role", "text"); nullopt when the line is not a header.
std::optional<std::pair<std::string, std::string>> match_header(const std::string& line) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) return std::nullopt;
    const std::string label = lower(line.substr(0, colon));
    for (auto name : StructuredPrompt::component_names) {
        if (label == name) {
            std::string rest = line.substr(colon + 1);
            if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
            return std::make_pair(std::string(name), rest);
        }
    }
    return std::nullopt;
}

bool all_whitespace(const std::string& s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

std::string& StructuredPrompt::component(std::string_view name) {
    if (name == "role") return role;
    if (name == "task") return task;
    if (name == "constraints") return constraints;
    if (name == "examples") return examples;
    if (name == "format") return format;
    throw Error("unknown prompt component: " + std::string(name));
}

const std::string& StructuredPrompt::component(std::string_view name) const {
    return const_cast<StructuredPrompt*>(this)->component(name);
}

std::string StructuredPrompt::flatten() const {
    std::string out;
    for (auto name : component_names) {
        const std::string& text = component(name);
        if (text.empty()) continue;
        if (!out.empty()) out += "\n";
        out += title_case(name) + ": " + text;
    }
    return out;
}

StructuredPrompt parse_structured(const std::string& text) {
    if (all_whitespace(text)) throw EmptyPromptError("cannot parse an empty prompt");

    StructuredPrompt prompt;
    std::string current = "task";
    bool current_started = false;
    std::istringstream in(text);
    std::string line;
    auto append_line = [&](const std::string& l) {
        std::string& target = prompt.component(current);
        if (current_started) target += "\n";
        target += l;
        current_started = true;
    };
    while (std::getline(in, line)) {
        if (auto header = match_header(line)) {
            current = header->first;
            current_started = false;
            if (!prompt.component(current).empty()) current_started = true;
            if (!header->second.empty()) append_line(header->second);
            continue;
        }
        if (!current_started && all_whitespace(line)) continue;  // leading blank lines
        append_line(line);
    }
    return prompt;
}

}  // namespace promptgrid
