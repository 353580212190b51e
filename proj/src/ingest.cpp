#include "biasaudit/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <set>

#include "json.hpp"

#include "biasaudit/errors.hpp"
#include "biasaudit/fileio.hpp"
#include "biasaudit/rng.hpp"
#include "biasaudit/text.hpp"

namespace biasaudit {

using nlohmann::json;

std::string_view to_string(GroupLabel label) {
    switch (label) {
        case GroupLabel::M: return "M";
        case GroupLabel::F: return "F";
        case GroupLabel::Unspecified: return "";
    }
    return "";
}

std::optional<GroupLabel> parse_group_label(std::string_view text) {
    const std::string t = to_lower_ascii(trim(text));
    if (t.empty()) return GroupLabel::Unspecified;
    if (t == "m") return GroupLabel::M;
    if (t == "f") return GroupLabel::F;
    return std::nullopt;
}

std::string_view to_string(Dimension dim) {
    return dim == Dimension::Student ? "student" : "assessor";
}

Dimension parse_dimension(std::string_view name) {
    const std::string n = to_lower_ascii(trim(name));
    if (n == "student" || n == "student_gender") return Dimension::Student;
    if (n == "assessor" || n == "assessor_gender") return Dimension::Assessor;
    throw ValidationError("unknown grouping dimension '" + std::string(name) + "'");
}

void validate_record(const EvaluationRecord& record) {
    if (trim(record.id).empty()) throw ValidationError("empty id");
    if (record.global_score < kMinScore || record.global_score > kMaxScore)
        throw ValidationError("score out of range: " + std::to_string(record.global_score));
    if (trim(record.comment).empty()) throw ValidationError("empty comment");
}

Dataset::Dataset(std::vector<EvaluationRecord> records, Provenance provenance)
    : records_(std::move(records)), provenance_(std::move(provenance)) {
    for (std::size_t i = 0; i < records_.size(); ++i) {
        auto [it, inserted] = index_.emplace(records_[i].id, i);
        if (!inserted) throw ValidationError("duplicate id '" + records_[i].id + "'");
    }
}

const EvaluationRecord* Dataset::find(std::string_view id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &records_[it->second];
}

const EvaluationRecord& Dataset::at(std::string_view id) const {
    const EvaluationRecord* r = find(id);
    if (!r) throw ValidationError("unknown id '" + std::string(id) + "'");
    return *r;
}

InputFormat parse_format(std::string_view name) {
    const std::string n = to_lower_ascii(name);
    if (n == "jsonl") return InputFormat::Jsonl;
    if (n == "csv") return InputFormat::Csv;
    throw ValidationError("unknown input format '" + std::string(name) + "'");
}

InputFormat format_for_path(const std::filesystem::path& path) {
    return to_lower_ascii(path.extension().string()) == ".csv" ? InputFormat::Csv : InputFormat::Jsonl;
}

namespace {

// Field name -> raw text. A missing key and a JSON null both mean "absent".
using RawRow = std::vector<std::pair<std::string, std::string>>;

const std::string* field(const RawRow& row, std::string_view key) {
    for (const auto& [k, v] : row) {
        if (k == key) return &v;
    }
    return nullptr;
}

int parse_score(const std::string& text) {
    const std::string t = trim(text);
    if (t.empty()) throw ValidationError("missing global_score");
    std::size_t pos = 0;
    long value = 0;
    try {
        value = std::stol(t, &pos);
    } catch (const std::exception&) {
        throw ValidationError("global_score is not an integer: '" + t + "'");
    }
    if (pos != t.size()) throw ValidationError("global_score is not an integer: '" + t + "'");
    if (value < kMinScore || value > kMaxScore) throw ValidationError("score out of range: " + t);
    return static_cast<int>(value);
}

GroupLabel parse_gender_field(const RawRow& row, std::string_view key) {
    const std::string* v = field(row, key);
    if (!v) return GroupLabel::Unspecified;
    auto label = parse_group_label(*v);
    if (!label) throw ValidationError(std::string(key) + " must be M, F or empty, got '" + *v + "'");
    return *label;
}

EvaluationRecord record_from_row(const RawRow& row) {
    static const std::set<std::string, std::less<>> known{
        "id", "comment", "global_score", "student_gender", "assessor_gender", "assessor_rank", "institution"};
    EvaluationRecord r;
    const std::string* id = field(row, "id");
    if (!id || trim(*id).empty()) throw ValidationError("missing id");
    r.id = *id;
    const std::string* comment = field(row, "comment");
    if (!comment || trim(*comment).empty()) throw ValidationError("empty comment");
    r.comment = *comment;
    const std::string* score = field(row, "global_score");
    if (!score) throw ValidationError("missing global_score");
    r.global_score = parse_score(*score);
    r.student_gender = parse_gender_field(row, "student_gender");
    r.assessor_gender = parse_gender_field(row, "assessor_gender");
    if (const std::string* v = field(row, "assessor_rank"); v && !v->empty()) r.assessor_rank = *v;
    if (const std::string* v = field(row, "institution"); v && !v->empty()) r.institution = *v;
    for (const auto& [k, v] : row) {
        if (!known.contains(k)) r.metadata[k] = v;
    }
    return r;
}

std::string id_hint(const RawRow& row) {
    const std::string* id = field(row, "id");
    return id ? *id : std::string{};
}

LoadResult finish(std::vector<EvaluationRecord> records, std::vector<RowError> errors, std::string source) {
    Provenance prov{std::move(source), std::chrono::system_clock::now()};
    return LoadResult{Dataset(std::move(records), std::move(prov)), std::move(errors)};
}

// RFC-4180: comma separated, double-quoted fields may contain commas, quotes ("") and newlines.
std::vector<std::vector<std::string>> parse_csv_rows(std::string_view content) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string cell;
    bool quoted = false;
    bool cell_started = false;
    std::size_t i = 0;
    if (content.starts_with("\xEF\xBB\xBF")) i = 3;
    auto end_row = [&] {
        row.push_back(std::move(cell));
        cell.clear();
        const bool blank = row.size() == 1 && row[0].empty() && !cell_started;
        if (!blank) rows.push_back(std::move(row));
        row.clear();
        cell_started = false;
    };
    for (; i < content.size(); ++i) {
        const char c = content[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < content.size() && content[i + 1] == '"') {
                    cell.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cell.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                quoted = true;
                cell_started = true;
                break;
            case ',':
                row.push_back(std::move(cell));
                cell.clear();
                cell_started = true;
                break;
            case '\r':
                break;
            case '\n':
                end_row();
                break;
            default:
                cell.push_back(c);
                cell_started = true;
        }
    }
    if (quoted) throw ValidationError("unterminated quoted CSV field");
    if (cell_started || !cell.empty() || !row.empty()) end_row();
    return rows;
}

}  // namespace

LoadResult parse_jsonl_records(std::string_view content, std::string source) {
    std::vector<EvaluationRecord> records;
    std::vector<RowError> errors;
    std::set<std::string, std::less<>> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= content.size()) {
        std::size_t nl = content.find('\n', pos);
        if (nl == std::string_view::npos) nl = content.size();
        std::string_view line = content.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (trim(line).empty()) continue;
        RawRow row;
        try {
            json obj = json::parse(line);
            if (!obj.is_object()) throw ValidationError("line is not a JSON object");
            for (auto& [key, value] : obj.items()) {
                if (value.is_null()) continue;
                row.emplace_back(key, value.is_string() ? value.get<std::string>() : value.dump());
            }
        } catch (const json::exception& e) {
            errors.push_back({line_no, {}, std::string("malformed JSON: ") + e.what()});
            continue;
        } catch (const ValidationError& e) {
            errors.push_back({line_no, {}, e.what()});
            continue;
        }
        try {
            EvaluationRecord r = record_from_row(row);
            if (!seen.insert(r.id).second)
                throw ValidationError("duplicate id '" + r.id + "' at line " + std::to_string(line_no));
            records.push_back(std::move(r));
        } catch (const ValidationError& e) {
            if (std::string_view(e.what()).starts_with("duplicate id")) throw;
            errors.push_back({line_no, id_hint(row), e.what()});
        }
    }
    return finish(std::move(records), std::move(errors), std::move(source));
}

LoadResult parse_csv_records(std::string_view content, std::string source) {
    auto rows = parse_csv_rows(content);
    std::vector<EvaluationRecord> records;
    std::vector<RowError> errors;
    if (rows.empty()) return finish({}, {}, std::move(source));
    const std::vector<std::string> header = rows.front();
    std::set<std::string, std::less<>> seen;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& cells = rows[i];
        if (cells.size() != header.size()) {
            errors.push_back({i, {}, "expected " + std::to_string(header.size()) + " fields, got " +
                                         std::to_string(cells.size())});
            continue;
        }
        RawRow row;
        for (std::size_t c = 0; c < header.size(); ++c) {
            const std::string name = trim(header[c]);
            // Empty optional cells are absent; genders treat "" as Unspecified either way.
            if (cells[c].empty() && name != "comment") continue;
            row.emplace_back(name, cells[c]);
        }
        try {
            EvaluationRecord r = record_from_row(row);
            if (!seen.insert(r.id).second)
                throw ValidationError("duplicate id '" + r.id + "' at row " + std::to_string(i));
            records.push_back(std::move(r));
        } catch (const ValidationError& e) {
            if (std::string_view(e.what()).starts_with("duplicate id")) throw;
            errors.push_back({i, id_hint(row), e.what()});
        }
    }
    return finish(std::move(records), std::move(errors), std::move(source));
}

LoadResult load_records(const std::filesystem::path& path, InputFormat format) {
    const std::string content = read_file(path);
    return format == InputFormat::Csv ? parse_csv_records(content, path.string())
                                      : parse_jsonl_records(content, path.string());
}

std::string records_to_jsonl(std::span<const EvaluationRecord> records) {
    std::string out;
    for (const auto& r : records) {
        nlohmann::ordered_json j;
        j["id"] = r.id;
        j["comment"] = r.comment;
        j["global_score"] = r.global_score;
        j["student_gender"] = std::string(to_string(r.student_gender));
        j["assessor_gender"] = std::string(to_string(r.assessor_gender));
        if (r.assessor_rank) j["assessor_rank"] = *r.assessor_rank;
        if (r.institution) j["institution"] = *r.institution;
        for (const auto& [k, v] : r.metadata) j[k] = v;
        out += j.dump();
        out += '\n';
    }
    return out;
}

SummaryReport summarize(const Dataset& dataset) {
    if (dataset.empty()) throw ValidationError("cannot summarize an empty dataset");
    SummaryReport s;
    s.records = dataset.size();
    for (GroupLabel g : {GroupLabel::M, GroupLabel::F, GroupLabel::Unspecified}) {
        s.student_counts[g] = 0;
        s.assessor_counts[g] = 0;
    }
    std::size_t total_words = 0;
    for (const auto& r : dataset.records()) {
        ++s.student_counts[r.student_gender];
        ++s.assessor_counts[r.assessor_gender];
        ++s.score_counts[static_cast<std::size_t>(r.global_score - kMinScore)];
        const std::size_t words = count_words(r.comment);
        total_words += words;
        s.max_words = std::max(s.max_words, words);
    }
    for (std::size_t k = 0; k < s.score_counts.size(); ++k)
        s.score_distribution[k] = static_cast<double>(s.score_counts[k]) / static_cast<double>(s.records);
    s.mean_words = static_cast<double>(total_words) / static_cast<double>(s.records);
    return s;
}

std::string_view to_string(Partition p) {
    switch (p) {
        case Partition::Train: return "train";
        case Partition::Validation: return "validation";
        case Partition::Test: return "test";
    }
    return "";
}

Partition parse_partition(std::string_view name) {
    const std::string n = to_lower_ascii(trim(name));
    if (n == "train") return Partition::Train;
    if (n == "validation" || n == "valid" || n == "dev") return Partition::Validation;
    if (n == "test") return Partition::Test;
    throw ValidationError("unknown partition '" + std::string(name) + "'");
}

std::vector<std::string> SplitAssignment::ids_in(Partition p) const {
    std::vector<std::string> ids;
    for (const auto& [id, part] : partition_of) {
        if (part == p) ids.push_back(id);
    }
    return ids;
}

std::array<std::size_t, 3> SplitAssignment::sizes() const {
    std::array<std::size_t, 3> s{};
    for (const auto& [id, part] : partition_of) ++s[static_cast<std::size_t>(part)];
    return s;
}

namespace {

constexpr double kTieTolerance = 1e-9;

std::array<double, 3> ratio_array(const SplitRatios& r) { return {r.train, r.validation, r.test}; }

void check_ratios(const SplitRatios& ratios) {
    const auto r = ratio_array(ratios);
    for (double x : r) {
        if (!(x >= 0.0) || !std::isfinite(x)) throw ValidationError("split ratios must be non-negative");
    }
    if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) throw ValidationError("split ratios must sum to 1");
}

struct Quota {
    std::array<std::size_t, 3> floor{};
    std::array<double, 3> frac{};
    std::size_t leftover = 0;
};

Quota quota_for(std::size_t n, const SplitRatios& ratios) {
    Quota q;
    const auto r = ratio_array(ratios);
    std::size_t assigned = 0;
    for (std::size_t p = 0; p < 3; ++p) {
        const double exact = r[p] * static_cast<double>(n);
        double fl = std::floor(exact + kTieTolerance);
        q.floor[p] = static_cast<std::size_t>(fl);
        q.frac[p] = std::max(0.0, exact - fl);
        assigned += q.floor[p];
    }
    q.leftover = n >= assigned ? n - assigned : 0;
    return q;
}

// Partition indices ordered by descending remainder, ties in partition order.
std::array<std::size_t, 3> remainder_order(const std::array<double, 3>& frac) {
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (std::abs(frac[a] - frac[b]) > kTieTolerance) return frac[a] > frac[b];
        return false;
    });
    return order;
}

// Distributes leftover units of each stratum over partitions so partition totals hit
// `demand`. Each (stratum, partition) cell takes at most one extra unit and only where
// its quota had a remainder. Returns false if no such assignment exists.
bool controlled_rounding(const std::vector<Quota>& quotas, std::array<std::size_t, 3> demand,
                         std::vector<std::array<bool, 3>>& extra) {
    const std::size_t S = quotas.size();
    extra.assign(S, {false, false, false});
    std::vector<std::size_t> supply(S);
    for (std::size_t s = 0; s < S; ++s) supply[s] = quotas[s].leftover;

    struct Cand {
        double frac;
        std::size_t s, p;
    };
    std::vector<Cand> cands;
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t p = 0; p < 3; ++p)
            if (quotas[s].frac[p] > kTieTolerance) cands.push_back({quotas[s].frac[p], s, p});
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (std::abs(a.frac - b.frac) > kTieTolerance) return a.frac > b.frac;
        return false;
    });
    for (const Cand& c : cands) {
        if (supply[c.s] > 0 && demand[c.p] > 0) {
            extra[c.s][c.p] = true;
            --supply[c.s];
            --demand[c.p];
        }
    }

    auto allowed = [&](std::size_t s, std::size_t p) { return quotas[s].frac[p] > kTieTolerance; };
    // Augmenting paths: a stratum with spare units takes a cell in a full partition,
    // whose current holder moves its unit elsewhere, until a partition with demand is reached.
    for (std::size_t start = 0; start < S; ++start) {
        while (supply[start] > 0) {
            std::array<std::size_t, 3> taker{S, S, S};  // stratum that would add a unit here
            std::vector<std::size_t> via(S, 3);          // partition a stratum would vacate
            std::vector<bool> seen_s(S, false);
            std::vector<std::size_t> queue{start};
            seen_s[start] = true;
            std::size_t found = 3;
            for (std::size_t qi = 0; qi < queue.size() && found == 3; ++qi) {
                const std::size_t s = queue[qi];
                for (std::size_t p = 0; p < 3; ++p) {
                    if (taker[p] != S || extra[s][p] || !allowed(s, p)) continue;
                    taker[p] = s;
                    if (demand[p] > 0) {
                        found = p;
                        break;
                    }
                    for (std::size_t s2 = 0; s2 < S; ++s2) {
                        if (!seen_s[s2] && extra[s2][p]) {
                            seen_s[s2] = true;
                            via[s2] = p;
                            queue.push_back(s2);
                        }
                    }
                }
            }
            if (found == 3) return false;
            --demand[found];
            std::size_t p = found;
            while (true) {
                const std::size_t s = taker[p];
                extra[s][p] = true;
                if (s == start) break;
                p = via[s];
                extra[s][p] = false;
            }
            --supply[start];
        }
    }
    return true;
}

}  // namespace

std::array<std::size_t, 3> allocate_largest_remainder(std::size_t n, const SplitRatios& ratios) {
    check_ratios(ratios);
    Quota q = quota_for(n, ratios);
    std::array<std::size_t, 3> sizes = q.floor;
    auto order = remainder_order(q.frac);
    for (std::size_t k = 0; k < q.leftover; ++k) ++sizes[order[k % 3]];
    return sizes;
}

SplitAssignment stratified_split(const Dataset& dataset, const SplitRatios& ratios, std::uint64_t seed) {
    check_ratios(ratios);
    // Score only: matching group score mixes across partitions makes the residual test conservative.
    std::map<int, std::vector<std::string>> strata;
    for (const auto& r : dataset.records()) strata[r.global_score].push_back(r.id);

    std::vector<Quota> quotas;
    for (const auto& [key, ids] : strata) quotas.push_back(quota_for(ids.size(), ratios));

    const auto global = allocate_largest_remainder(dataset.size(), ratios);
    std::array<std::size_t, 3> demand{};
    bool feasible = true;
    for (std::size_t p = 0; p < 3; ++p) {
        std::size_t floors = 0;
        for (const auto& q : quotas) floors += q.floor[p];
        if (floors > global[p]) feasible = false;
        else demand[p] = global[p] - floors;
    }
    std::vector<std::array<bool, 3>> extra;
    if (feasible) feasible = controlled_rounding(quotas, demand, extra);

    SplitAssignment out;
    out.seed = seed;
    Rng rng(seed);
    std::size_t s = 0;
    for (auto& [key, ids] : strata) {
        std::array<std::size_t, 3> sizes = quotas[s].floor;
        if (feasible) {
            for (std::size_t p = 0; p < 3; ++p) sizes[p] += extra[s][p] ? 1 : 0;
        } else {
            sizes = allocate_largest_remainder(ids.size(), ratios);
        }
        std::vector<std::string> order = ids;
        rng.shuffle(std::span<std::string>(order));
        std::size_t cursor = 0;
        for (std::size_t p = 0; p < 3; ++p) {
            for (std::size_t k = 0; k < sizes[p]; ++k) out.partition_of[order[cursor++]] = static_cast<Partition>(p);
        }
        ++s;
    }
    return out;
}

std::string split_to_jsonl(const SplitAssignment& split, const Dataset& dataset) {
    std::string out;
    for (const auto& r : dataset.records()) {
        auto it = split.partition_of.find(r.id);
        if (it == split.partition_of.end()) continue;
        nlohmann::ordered_json j;
        j["id"] = r.id;
        j["partition"] = std::string(to_string(it->second));
        out += j.dump();
        out += '\n';
    }
    return out;
}

SplitAssignment split_from_jsonl(std::string_view content, const Dataset& dataset) {
    SplitAssignment split;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < content.size()) {
        std::size_t nl = content.find('\n', pos);
        if (nl == std::string_view::npos) nl = content.size();
        std::string_view line = content.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
            const std::string id = j.at("id").get<std::string>();
            const Partition p = parse_partition(j.at("partition").get<std::string>());
            if (!dataset.find(id)) throw ValidationError("split names unknown id '" + id + "'");
            if (!split.partition_of.emplace(id, p).second)
                throw ValidationError("split lists id '" + id + "' twice");
        } catch (const json::exception& e) {
            throw ValidationError("split line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return split;
}

std::vector<EvaluationRecord> select(const Dataset& dataset, const SplitAssignment& split, Partition p) {
    std::vector<EvaluationRecord> out;
    for (const auto& r : dataset.records()) {
        auto it = split.partition_of.find(r.id);
        if (it != split.partition_of.end() && it->second == p) out.push_back(r);
    }
    return out;
}

}  // namespace biasaudit
