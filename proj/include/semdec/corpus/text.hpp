#pragma once

#include "semdec/types.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace semdec {

/// Lowercases and strips leading/trailing punctuation. May return "".
std::string normalize_token(std::string_view raw);

struct WordAnnotation {
    std::string token;
    double t_on = 0.0;  // seconds
    double t_off = 0.0; // seconds, > t_on
};

/// Throws DataError unless every annotation has t_off > t_on and the list is
/// sorted by onset without overlaps.
void validate_annotations(const std::vector<WordAnnotation>& words);

/// TSV rows: token \t t_on \t t_off. Times are written in shortest round-trip form.
void write_annotations(const std::filesystem::path& path, const std::vector<WordAnnotation>& words);
std::vector<WordAnnotation> read_annotations(const std::filesystem::path& path);

class Vocabulary {
public:
    static constexpr int unk_id = 0;
    static constexpr std::string_view unk_token = "<unk>";

    /// Normalizes tokens and keeps those seen at least `min_count` times.
    /// Id 0 is the unknown-word token (its count is the number of dropped
    /// occurrences); remaining ids are ordered by count, then token.
    static Vocabulary build(const std::vector<std::vector<std::string>>& trials, int min_count = 2);

    int size() const { return static_cast<int>(tokens_.size()); }
    int min_count() const { return min_count_; }
    /// Id of an already-normalized token; unk_id when absent.
    int id(std::string_view token) const;
    const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    long count(int id) const { return counts_.at(static_cast<std::size_t>(id)); }

    std::vector<int> encode(const std::vector<std::string>& raw_tokens) const;

    std::string serialize() const;
    static Vocabulary deserialize(std::string_view text);

    bool operator==(const Vocabulary&) const = default;

private:
    std::vector<std::string> tokens_;
    std::vector<long> counts_;
    std::map<std::string, int, std::less<>> index_;
    int min_count_ = 1;
};

} // namespace semdec
