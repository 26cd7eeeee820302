#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace geosr {

// Text with `{{name}}` placeholders. Placeholder names are validated against
// an allowed set when the template is constructed.
class PromptTemplate {
public:
    PromptTemplate(std::string text, const std::vector<std::string_view>& allowed, std::string_view label);

    // Throws ConfigError if a placeholder has no value.
    std::string render(const std::map<std::string, std::string, std::less<>>& values) const;

    const std::string& text() const noexcept { return text_; }
    const std::vector<std::string>& placeholders() const noexcept { return placeholders_; }

private:
    std::string text_;
    std::vector<std::string> placeholders_;
};

struct PromptPaths {
    std::optional<std::filesystem::path> predict;
    std::optional<std::filesystem::path> variable_select;
    std::optional<std::filesystem::path> point_select;
    std::optional<std::filesystem::path> refine;
};

struct PromptSet {
    PromptTemplate predict;
    PromptTemplate variable_select;
    PromptTemplate point_select;
    PromptTemplate refine;

    static PromptSet builtin();
    // Built-in templates, each replaced by its file when a path is given.
    static PromptSet load(const PromptPaths& overrides);
};

}  // namespace geosr
