#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace biasaudit {

inline constexpr int kMinScore = 0;
inline constexpr int kMaxScore = 3;
inline constexpr int kScoreLevels = kMaxScore - kMinScore + 1;

enum class GroupLabel { M, F, Unspecified };

std::string_view to_string(GroupLabel label);
/// "M", "F" and "" are accepted (case-insensitive); anything else is nullopt.
std::optional<GroupLabel> parse_group_label(std::string_view text);

/// A grouping field of EvaluationRecord.
enum class Dimension { Student, Assessor };

std::string_view to_string(Dimension dim);
/// Accepts "student", "student_gender", "assessor", "assessor_gender".
Dimension parse_dimension(std::string_view name);

struct EvaluationRecord {
    std::string id;
    std::string comment;
    int global_score = 0;
    GroupLabel student_gender = GroupLabel::Unspecified;
    GroupLabel assessor_gender = GroupLabel::Unspecified;
    std::optional<std::string> assessor_rank;
    std::optional<std::string> institution;
    /// Unrecognized input fields, kept verbatim (JSON-encoded for JSONL input).
    std::map<std::string, std::string> metadata;

    GroupLabel label(Dimension dim) const {
        return dim == Dimension::Student ? student_gender : assessor_gender;
    }
};

/// Throws ValidationError if the record breaks a field invariant.
void validate_record(const EvaluationRecord& record);

struct Provenance {
    std::string source;
    std::chrono::system_clock::time_point loaded_at{};
};

class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<EvaluationRecord> records, Provenance provenance = {});

    const std::vector<EvaluationRecord>& records() const noexcept { return records_; }
    const Provenance& provenance() const noexcept { return provenance_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }

    const EvaluationRecord* find(std::string_view id) const;
    const EvaluationRecord& at(std::string_view id) const;

private:
    std::vector<EvaluationRecord> records_;
    std::map<std::string, std::size_t, std::less<>> index_;
    Provenance provenance_;
};

enum class InputFormat { Jsonl, Csv };

InputFormat parse_format(std::string_view name);
/// Picks the format from the file extension (.csv, otherwise JSONL).
InputFormat format_for_path(const std::filesystem::path& path);

struct RowError {
    std::size_t line = 0;  // 1-based physical line (JSONL) or record row (CSV)
    std::string id;
    std::string message;
};

struct LoadResult {
    Dataset dataset;
    std::vector<RowError> errors;
};

/// Rows failing validation land in `errors`; duplicate ids and unreadable input throw.
LoadResult load_records(const std::filesystem::path& path, InputFormat format);
LoadResult parse_jsonl_records(std::string_view content, std::string source = {});
LoadResult parse_csv_records(std::string_view content, std::string source = {});

std::string records_to_jsonl(std::span<const EvaluationRecord> records);

struct SummaryReport {
    std::size_t records = 0;
    std::map<GroupLabel, std::size_t> student_counts;
    std::map<GroupLabel, std::size_t> assessor_counts;
    std::array<std::size_t, kScoreLevels> score_counts{};
    std::array<double, kScoreLevels> score_distribution{};
    double mean_words = 0.0;
    std::size_t max_words = 0;
};

SummaryReport summarize(const Dataset& dataset);

enum class Partition { Train, Validation, Test };

std::string_view to_string(Partition p);
Partition parse_partition(std::string_view name);

struct SplitRatios {
    double train = 0.70;
    double validation = 0.15;
    double test = 0.15;
};

struct SplitAssignment {
    std::map<std::string, Partition, std::less<>> partition_of;
    std::uint64_t seed = 0;

    std::vector<std::string> ids_in(Partition p) const;
    std::array<std::size_t, 3> sizes() const;
};

/// Largest-remainder allocation of `n` items over `ratios`; ties go to the
/// earlier partition (train, validation, test).
std::array<std::size_t, 3> allocate_largest_remainder(std::size_t n, const SplitRatios& ratios);

/// Stratifies on global_score. Each stratum's partition sizes
/// stay within one record of its quota and the overall totals follow the
/// largest-remainder allocation of the whole dataset whenever both are jointly
/// satisfiable.
SplitAssignment stratified_split(const Dataset& dataset, const SplitRatios& ratios, std::uint64_t seed);

std::string split_to_jsonl(const SplitAssignment& split, const Dataset& dataset);
SplitAssignment split_from_jsonl(std::string_view content, const Dataset& dataset);

/// Records of `dataset` assigned to `p`, in dataset order.
std::vector<EvaluationRecord> select(const Dataset& dataset, const SplitAssignment& split, Partition p);

}  // namespace biasaudit
