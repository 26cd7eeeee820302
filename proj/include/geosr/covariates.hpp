#pragma once

#include <array>
#include <bitset>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace geosr {

inline constexpr std::size_t kCovariateCount = 19;

// One of the WorldClim bioclimatic variables bio1..bio19, stored 0-based.
class CovariateCode {
public:
    static std::optional<CovariateCode> parse(std::string_view text);
    static CovariateCode from_index(std::size_t index);

    std::size_t index() const noexcept { return index_; }
    int number() const noexcept { return static_cast<int>(index_) + 1; }
    std::string str() const;

    friend auto operator<=>(const CovariateCode&, const CovariateCode&) = default;

private:
    explicit CovariateCode(std::size_t index) : index_(index) {}
    std::size_t index_;
};

struct CovariateInfo {
    std::string_view code;
    std::string_view name;
    std::string_view relevance;
    std::string_view unit;
};

// The fixed table of 19 bioclimatic variables, in registry order.
class CovariateRegistry {
public:
    static const CovariateRegistry& worldclim();

    const std::array<CovariateInfo, kCovariateCount>& entries() const noexcept { return entries_; }
    const CovariateInfo& info(CovariateCode code) const { return entries_[code.index()]; }
    std::size_t size() const noexcept { return entries_.size(); }

    // Tab-separated dump: code, name, relevance, unit.
    std::string dump() const;

private:
    explicit CovariateRegistry(std::array<CovariateInfo, kCovariateCount> entries)
        : entries_(entries) {}
    std::array<CovariateInfo, kCovariateCount> entries_;
};

// Ordered subset of covariate codes; iteration is always bio1..bio19.
class CovariateSet {
public:
    CovariateSet() = default;
    static CovariateSet all();

    void insert(CovariateCode code) { bits_.set(code.index()); }
    bool contains(CovariateCode code) const { return bits_.test(code.index()); }
    std::size_t size() const { return bits_.count(); }
    bool empty() const { return bits_.none(); }
    std::vector<CovariateCode> codes() const;
    std::string str() const;  // "bio1;bio12"
    static CovariateSet parse_list(std::string_view text);  // inverse of str()

    friend bool operator==(const CovariateSet&, const CovariateSet&) = default;

private:
    std::bitset<kCovariateCount> bits_;
};

// Covariate values at one location. Absent cells stay absent; nothing is
// imputed.
class CovariateRow {
public:
    void set(CovariateCode code, double value);
    std::optional<double> get(CovariateCode code) const { return values_[code.index()]; }
    bool has(CovariateCode code) const { return values_[code.index()].has_value(); }
    std::size_t size() const;
    bool empty() const { return size() == 0; }
    CovariateSet keys() const;

    friend bool operator==(const CovariateRow&, const CovariateRow&) = default;

private:
    std::array<std::optional<double>, kCovariateCount> values_{};
};

// Keys of the result are selection ∩ row keys, values copied unchanged.
CovariateRow project(const CovariateRow& row, const CovariateSet& selection);

using CovariateTable = std::map<std::string, CovariateRow>;

// Reads an `id,bio..` CSV. Unknown columns, NaN/inf and non-numeric cells
// are errors naming the offending row and column; empty cells are absent.
CovariateTable load_covariates(const std::filesystem::path& path);
CovariateTable parse_covariates(std::string_view text, std::string_view source_name = "<input>");

// Writes every code present in any row, in registry order, with
// round-trip-exact number formatting. Rows are written in id order.
std::string format_covariates(const CovariateTable& table);
void save_covariates(const std::filesystem::path& path, const CovariateTable& table);

}  // namespace geosr
